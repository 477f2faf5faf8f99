REPORT_TITLE = "📊 {title}"

REPORT_SUMMARY = "Instances: {total}   Accuracy: {accuracy}"

TABLE_CAPTIONS = {
    "precision": "Precision (each predicted column sums to 100%)",
    "recall": "Recall (each ground-truth row sums to 100%)",
}

# Ground truth rows x predicted columns, as in the confusion tables of the evaluation
TABLE_HEAD = "{corner:<16}" + "{:>12}" * 3
TABLE_ROW = "{label:<16}" + "{:>12}" * 3

PER_CLASS_HEAD = "{corner:<16}{precision:>12}{recall:>12}"
PER_CLASS_ROW = "{label:<16}{precision:>12}{recall:>12}"

MACRO_LABEL = "Macro average"
UNDEFINED = "n/a"
