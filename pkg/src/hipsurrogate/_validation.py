"""Small argument checks shared by the estimators and the CLI."""

import numbers


def check_probability(value, name, *, open_low=False, open_high=False):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    low_ok = value > 0.0 if open_low else value >= 0.0
    high_ok = value < 1.0 if open_high else value <= 1.0
    if not (low_ok and high_ok):
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise ValueError(f"{name} must lie in {lo}0, 1{hi}, got {value}")
    return value


def check_positive_int(value, name, *, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_choice(value, name, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value


def check_bundles(X):
    """Materialise ``X`` as a list of document bundles."""
    from .brat import DocumentBundle

    if isinstance(X, DocumentBundle):
        raise TypeError("expected an iterable of DocumentBundle, got a single bundle")
    docs = list(X)
    for i, doc in enumerate(docs):
        if not isinstance(doc, DocumentBundle):
            raise TypeError(f"item {i} is {type(doc).__name__}, expected DocumentBundle")
    return docs
