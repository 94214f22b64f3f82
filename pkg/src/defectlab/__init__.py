"""Class-level OO metrics, defect mining and defect-prediction evaluation for Java codebases."""

__version__ = "0.1.0"
