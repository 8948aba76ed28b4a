#include <stdio.h>
#include <string.h>
#include "insecscan.h"

int main(void) {
    InsecscanConfig *cfg = insecscan_config_new();
    if (insecscan_config_set(cfg, "oracle", "false") != INSECSCAN_STATUS_OK) return 10;
    InsecscanReport *rep = NULL;
    const char *src = "p = alloc(1);\nfree(p);\nx = [p];\n";
    if (insecscan_analyze(cfg, src, "uaf.mc", &rep) != INSECSCAN_STATUS_OK) return 11;
    if (insecscan_report_finding_count(rep) != 1) return 12;
    char *json = insecscan_report_json(rep);
    if (json == NULL || strstr(json, "\"err\"") == NULL) return 13;
    insecscan_string_free(json);
    insecscan_report_free(rep);
    if (insecscan_analyze(cfg, "x = ;", "bad.mc", &rep) != INSECSCAN_STATUS_PARSE_ERROR) return 14;
    if (insecscan_last_error_message() == NULL) return 15;
    insecscan_config_free(cfg);
    puts("ok");
    return 0;
}
