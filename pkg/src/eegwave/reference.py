"""Published test-set confusion matrices and per-class metric table.

Class order is Noise, Artifacts, Physiological, Pathological; rows are true
classes. Metric values are as printed (two decimals, "~1.00" stored as 1.00).
"""
import numpy as np

WAVENET_CONFUSION = np.array([
    [3561, 1, 0, 1],
    [10, 3372, 371, 47],
    [0, 45, 10866, 175],
    [0, 9, 272, 2166],
])

TCN_CONFUSION = np.array([
    [3542, 43, 5, 0],
    [1, 3833, 31, 3],
    [0, 657, 9817, 596],
    [0, 47, 205, 2132],
])

# class -> metric -> printed value
WAVENET_TABLE = {
    "Physiological": {"f1": 0.96, "precision": 0.94, "recall": 0.98},
    "Pathological": {"f1": 0.90, "precision": 0.96, "recall": 0.89},
    "Artifacts": {"f1": 0.93, "precision": 0.98, "recall": 0.89},
    "Noise": {"f1": 1.00, "precision": 1.00, "recall": 1.00},
    "Macro avg.": {"f1": 0.94, "precision": 0.95, "recall": 0.93},
}

TCN_TABLE = {
    "Physiological": {"f1": 0.93, "precision": 0.98, "recall": 0.89},
    "Pathological": {"f1": 0.83, "precision": 0.78, "recall": 0.89},
    "Artifacts": {"f1": 0.91, "precision": 0.84, "recall": 0.99},
    "Noise": {"f1": 0.99, "precision": 1.00, "recall": 0.99},
    "Macro avg.": {"f1": 0.92, "precision": 0.90, "recall": 0.94},
}

# the printed WaveNet pathological precision does not follow from the matrix;
# the matrix gives 2166 / 2389
WAVENET_PATHOLOGICAL_PRECISION_FROM_MATRIX = 2166 / 2389
