"""Detection of social-network mental disorders from multi-source activity logs.

Modules: ``activity`` (events, sessions, graphs), ``bursts`` (two-state burst
detection), ``features`` (per-source feature matrices), ``stm`` (graph-regularized
Tucker factorization), ``svm`` (linear SVM / TSVM), ``evaluation`` (metrics, CV,
information gain), ``synth`` (planted cohorts), ``analytics`` and ``cli``.
"""

__version__ = "0.1.0"
