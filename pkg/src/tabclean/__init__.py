"""Attribute-noise handling for mixed-type tabular data.

Modules:
    data        datasets, schemas, [0, 1] encoding with observation masks
    nn          dense/conv1d networks, masked loss, backprop, Adam
    corrector   reconstruction-based noise corrector with early stopping
    imputers    classic imputation baselines (mean, median, knn, ...)
    noiselab    controlled injection of erroneous values
    cleaning    noise-ranking based filtering and polishing
    evaluation  decision-tree CV, balanced accuracy, AUC, Welch tests
    bench       experiment configs, runner, results.csv and summaries
    cli         command-line entry point
"""

__version__ = "0.1.0"
