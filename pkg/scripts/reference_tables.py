"""Recompute the published per-class metric tables from the published confusion matrices.

Prints the derived value next to the printed one for every cell and flags
cells that disagree after rounding to two decimals.
"""
from eegwave.metrics import ConfusionMatrix, accuracy, precision_recall_f1, round_half_even
from eegwave.reference import TCN_CONFUSION, TCN_TABLE, WAVENET_CONFUSION, WAVENET_TABLE

CLASSES = ("Noise", "Artifacts", "Physiological", "Pathological")


def compare(name, matrix, table):
    cm = ConfusionMatrix(matrix)
    per, macro = precision_recall_f1(cm)
    rows = list(zip(CLASSES, per)) + [("Macro avg.", macro)]
    print(f"{name}  (n={cm.total}, accuracy {accuracy(cm):.4f})")
    print(f"  {'class':<14}{'metric':<11}{'derived':>9}{'rounded':>9}{'printed':>9}")
    for cls, m in rows:
        for metric in ("precision", "recall", "f1"):
            value = getattr(m, metric)
            printed = table[cls][metric]
            flag = "" if float(round_half_even(value)) == printed else "  <-- differs"
            print(f"  {cls:<14}{metric:<11}{value:>9.4f}{round_half_even(value):>9}{printed:>9.2f}{flag}")
    print()


if __name__ == "__main__":
    compare("WaveNet", WAVENET_CONFUSION, WAVENET_TABLE)
    compare("TCN", TCN_CONFUSION, TCN_TABLE)
