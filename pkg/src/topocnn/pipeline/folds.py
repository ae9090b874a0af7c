"""Leave-one-subject-out folds: each fold holds out one subject per condition."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_subjects: frozenset
    test_subjects: frozenset
    validation_fraction: float = 0.1


def loso_folds(subjects, validation_fraction=0.1):
    """``subjects`` maps condition -> subject ids; n per condition gives n folds."""
    ordered = {c: sorted(ids) for c, ids in subjects.items()}
    if not ordered:
        raise ValueError("no subjects given")
    sizes = {c: len(ids) for c, ids in ordered.items()}
    if len(set(sizes.values())) != 1:
        raise ValueError(f"conditions have unequal subject counts: {sizes}")
    everyone = frozenset(s for ids in ordered.values() for s in ids)
    n = next(iter(sizes.values()))
    folds = []
    for i in range(n):
        test = frozenset(ids[i] for ids in ordered.values())
        folds.append(FoldSplit(i, everyone - test, test, validation_fraction))
    check_folds(folds, ordered)
    return folds


def check_folds(folds, subjects):
    """Raise AssertionError unless the folds partition ``subjects`` correctly."""
    condition_of = {s: c for c, ids in subjects.items() for s in ids}
    everyone = set(condition_of)
    seen = []
    for f in folds:
        if f.train_subjects & f.test_subjects:
            raise AssertionError(f"fold {f.fold_index}: train and test overlap")
        if (f.train_subjects | f.test_subjects) != everyone:
            raise AssertionError(f"fold {f.fold_index}: does not cover every subject")
        conds = sorted(condition_of[s] for s in f.test_subjects)
        if conds != sorted(subjects):
            raise AssertionError(f"fold {f.fold_index}: test conditions {conds}")
        seen.extend(f.test_subjects)
    if sorted(seen) != sorted(everyone):
        raise AssertionError("some subject is not tested exactly once")
