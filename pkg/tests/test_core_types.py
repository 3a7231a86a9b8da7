import numpy as np
import pytest

from maskscribe.core_types import (
    BinaryMask,
    ChangeMask,
    ClassEntry,
    EmbeddingBatch,
    LossWeights,
    ScdConfusion,
    decompose,
    recompose,
    validate_change_mask,
)
from maskscribe.errors import ShapeMismatch


def test_validate_empty_mask_is_valid():
    mask = ChangeMask(labels=np.zeros((4, 4), dtype=np.uint8), class_table=())
    assert validate_change_mask(mask) == []


def test_validate_unknown_label():
    labels = np.zeros((4, 4), dtype=np.uint8)
    labels[1, 2] = 3
    mask = ChangeMask(labels=labels, class_table=(ClassEntry(1, "buildings", "destroyed"),))
    findings = validate_change_mask(mask)
    assert len(findings) == 1
    assert findings[0].code == "unknown_label"
    assert findings[0].class_index == 3
    assert findings[0].pixel == (2, 1)


def test_validate_reserved_index():
    mask = ChangeMask(
        labels=np.zeros((4, 4), dtype=np.uint8),
        class_table=(ClassEntry(0, "buildings", "destroyed"),),
    )
    findings = validate_change_mask(mask)
    assert [f.code for f in findings] == ["reserved_index"]


def test_validate_duplicate_index():
    mask = ChangeMask(
        labels=np.zeros((4, 4), dtype=np.uint8),
        class_table=(ClassEntry(1, "a", "x"), ClassEntry(1, "b", "y")),
    )
    assert [f.code for f in validate_change_mask(mask)] == ["duplicate_index"]


def test_decompose_recompose_round_trip(rng):
    for _ in range(25):
        labels = rng.integers(0, 4, size=(12, 9)).astype(np.uint8)
        table = tuple(ClassEntry(i, f"cat{i}", f"type{i}") for i in (1, 2, 3))
        mask = ChangeMask(labels=labels, class_table=table)
        rebuilt = recompose(mask.width, mask.height, decompose(mask))
        assert np.array_equal(rebuilt.labels, mask.labels)
        assert rebuilt.class_table == mask.class_table


def test_binary_mask_count_matches_naive(rng):
    for _ in range(1000):
        bits = rng.random((6, 7)) < 0.4
        mask = BinaryMask.from_array(bits)
        naive = sum(1 for row in bits.tolist() for value in row if value)
        assert mask.foreground_count == naive == mask.recount()


def test_binary_mask_rejects_bad_shapes():
    with pytest.raises(ShapeMismatch):
        BinaryMask.from_array(np.zeros(4, dtype=bool))
    with pytest.raises(ValueError):
        BinaryMask(bits=np.ones((2, 2), dtype=bool), foreground_count=3)


def test_types_are_frozen_in_place():
    labels = np.zeros((4, 4), dtype=np.uint8)
    mask = ChangeMask(labels=labels, class_table=())
    with pytest.raises(ValueError):
        mask.labels[0, 0] = 1


def test_embedding_batch_invariants():
    batch = EmbeddingBatch(values=np.ones((2, 3)))
    assert (batch.rows, batch.cols) == (2, 3)
    with pytest.raises(ValueError):
        EmbeddingBatch(values=np.array([[np.nan, 0.0]]))
    with pytest.raises(ShapeMismatch):
        EmbeddingBatch(values=np.ones(3))


def test_loss_weights_defaults_and_validation():
    weights = LossWeights()
    assert (weights.alpha, weights.beta, weights.gamma) == (0.4, 0.3, 0.3)
    assert (weights.lambda_, weights.tau) == (0.5, 0.7)
    with pytest.raises(ValueError):
        LossWeights(tau=0.0)
    with pytest.raises(ValueError):
        LossWeights(alpha=-0.1)


def test_confusion_construction_and_merge():
    conf = ScdConfusion.zeros(2)
    assert conf.total == 0
    other = ScdConfusion(n_classes=2, cells=np.arange(9).reshape(3, 3))
    merged = conf.add(other)
    assert merged.total == 36
    with pytest.raises(ShapeMismatch):
        conf.add(ScdConfusion.zeros(3))
    with pytest.raises(ValueError):
        ScdConfusion(n_classes=1, cells=np.array([[1, -1], [0, 0]]))
