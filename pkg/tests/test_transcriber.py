import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskscribe.core_types import BinaryMask, ChangeMask, ClassEntry, Direction, Quantity
from maskscribe.errors import EmptyMask
from maskscribe.transcriber import (
    QuantityThresholds,
    centroid,
    class_transcriptions,
    direction,
    quantity,
    region_stats,
    transcribe_mask,
)
from oracles import centroid_bruteforce, direction_9way, flood_fill_components, quantity_binning


def mask_from_pixels(pixels, width, height):
    bits = np.zeros((height, width), dtype=bool)
    for x, y in pixels:
        bits[y, x] = True
    return BinaryMask.from_array(bits)


class TestCentroid:
    def test_single_pixel(self):
        assert centroid(mask_from_pixels([(10, 10)], 32, 32)) == (10.0, 10.0)

    def test_two_pixel_midpoint(self):
        assert centroid(mask_from_pixels([(0, 0), (10, 20)], 32, 32)) == (5.0, 10.0)

    def test_empty_mask_raises(self):
        with pytest.raises(EmptyMask):
            centroid(BinaryMask.from_array(np.zeros((4, 4), dtype=bool)))

    def test_matches_bruteforce_on_random_pixels(self, rng):
        flat = rng.choice(512 * 512, size=100, replace=False)
        pixels = [(int(i % 512), int(i // 512)) for i in flat]
        expected = centroid_bruteforce(pixels)
        got = centroid(mask_from_pixels(pixels, 512, 512))
        assert got[0] == pytest.approx(expected[0], abs=1e-12)
        assert got[1] == pytest.approx(expected[1], abs=1e-12)


class TestDirection:
    def test_northwest_corner(self):
        assert direction(10, 10, 512, 512) is Direction.NORTHWEST

    def test_exact_center(self):
        assert direction(256, 256, 512, 512) is Direction.CENTER

    def test_boundary_equality_falls_into_center(self):
        # H = 768 makes H/3 exact in floating point.
        assert direction(256, 768 / 3, 512, 768) is Direction.CENTER

    def test_upper_boundary_equality_falls_south(self):
        assert direction(256, 2 * 768 / 3, 512, 768) is Direction.SOUTH

    def test_agrees_with_nine_way_oracle(self, rng):
        for _ in range(10_000):
            width = int(rng.integers(3, 2000))
            height = int(rng.integers(3, 2000))
            c_x = float(rng.random() * width)
            c_y = float(rng.random() * height)
            assert direction(c_x, c_y, width, height).value == direction_9way(c_x, c_y, width, height)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            direction(512.0, 10.0, 512, 512)


class TestQuantity:
    @pytest.mark.parametrize("n,expected", [
        (1, Quantity.SINGLE),
        (799, Quantity.SINGLE),
        (800, Quantity.FEW),
        (3999, Quantity.FEW),
        (4000, Quantity.SEVERAL),
        (7999, Quantity.SEVERAL),
        (8000, Quantity.MULTIPLE),
    ])
    def test_default_bins(self, n, expected):
        assert quantity(n) is expected

    def test_monotone_at_threshold_edges(self):
        thresholds = QuantityThresholds(t1=10, t2=20, t3=30)
        order = [Quantity.SINGLE, Quantity.FEW, Quantity.SEVERAL, Quantity.MULTIPLE]
        previous = -1
        for n in (9, 10, 19, 20, 29, 30):
            rank = order.index(quantity(n, thresholds))
            assert rank >= previous
            previous = rank
        assert quantity(9, thresholds) is Quantity.SINGLE
        assert quantity(30, thresholds) is Quantity.MULTIPLE

    def test_matches_binning_oracle(self, rng):
        for n in rng.integers(1, 10_000, size=500):
            assert quantity(int(n)).value == quantity_binning(int(n))

    def test_rejects_zero(self):
        with pytest.raises(EmptyMask):
            quantity(0)

    def test_threshold_ordering_enforced(self):
        with pytest.raises(ValueError):
            QuantityThresholds(t1=5, t2=5, t3=9)


class TestTranscribeMask:
    def test_all_zero_mask_yields_nothing(self):
        mask = ChangeMask(labels=np.zeros((8, 8), dtype=np.uint8),
                          class_table=(ClassEntry(1, "buildings", "destroyed"),))
        assert transcribe_mask(mask) == []

    def test_constructed_case_hand_checked(self):
        # 5000 pixels in a 50x100 block centered near (450, 60): east of
        # 2*512/3 and north of 512/3, with 4000 <= 5000 < 8000.
        labels = np.zeros((512, 512), dtype=np.uint8)
        labels[36:86, 401:501] = 1
        mask = ChangeMask(labels=labels, class_table=(ClassEntry(1, "buildings", "destroyed"),))
        quads = transcribe_mask(mask)
        assert len(quads) == 1
        quad = quads[0]
        assert quad.pixel_count == 5000
        assert quad.centroid == (450.5, 60.5)
        assert quad.location is Direction.NORTHEAST
        assert quad.quantity is Quantity.SEVERAL
        assert (quad.category, quad.change_type) == ("buildings", "destroyed")

    def test_two_classes_in_table_order(self):
        labels = np.zeros((16, 16), dtype=np.uint8)
        labels[0, 0] = 2
        labels[15, 15] = 1
        table = (ClassEntry(2, "greenhouse", "newly built"), ClassEntry(1, "buildings", "destroyed"))
        quads = transcribe_mask(ChangeMask(labels=labels, class_table=table))
        assert [(q.category, q.change_type) for q in quads] == [
            ("greenhouse", "newly built"), ("buildings", "destroyed")]

    def test_output_count_at_most_table_size(self, rng):
        for _ in range(50):
            labels = rng.integers(0, 4, size=(20, 20)).astype(np.uint8)
            table = tuple(ClassEntry(i, f"c{i}", f"t{i}") for i in (1, 2, 3))
            mask = ChangeMask(labels=labels, class_table=table)
            quads = transcribe_mask(mask)
            present = set(mask.present_class_indices())
            assert len(quads) == len([e for e in table if e.index in present]) <= len(table)

    def test_empty_classes_keep_stats_rows(self):
        labels = np.zeros((8, 8), dtype=np.uint8)
        labels[2, 2] = 1
        table = (ClassEntry(1, "a", "x"), ClassEntry(2, "b", "y"))
        rows = class_transcriptions(ChangeMask(labels=labels, class_table=table))
        assert [(r.entry.index, r.pixel_count) for r in rows] == [(1, 1), (2, 0)]
        assert rows[1].quadruple is None


@settings(max_examples=60, deadline=None)
@given(dx=st.integers(0, 20), dy=st.integers(0, 20), data=st.data())
def test_translation_moves_centroid_exactly(dx, dy, data):
    n = data.draw(st.integers(1, 30))
    base = data.draw(st.lists(
        st.tuples(st.integers(0, 30), st.integers(0, 30)),
        min_size=n, max_size=n, unique=True))
    moved = [(x + dx, y + dy) for x, y in base]
    cx0, cy0 = centroid(mask_from_pixels(base, 64, 64))
    cx1, cy1 = centroid(mask_from_pixels(moved, 64, 64))
    assert cx1 - cx0 == pytest.approx(dx, abs=1e-9)
    assert cy1 - cy0 == pytest.approx(dy, abs=1e-9)


def test_reflection_swaps_direction_labels(rng):
    swap_h = {"east": "west", "west": "east", "northeast": "northwest", "northwest": "northeast",
              "southeast": "southwest", "southwest": "southeast",
              "north": "north", "south": "south", "center": "center"}
    swap_v = {"north": "south", "south": "north", "northeast": "southeast", "southeast": "northeast",
              "northwest": "southwest", "southwest": "northwest",
              "east": "east", "west": "west", "center": "center"}
    checked = 0
    while checked < 200:
        width = int(rng.integers(12, 120))
        height = int(rng.integers(12, 120))
        bits = rng.random((height, width)) < 0.15
        if not bits.any():
            continue
        mask = BinaryMask.from_array(bits)
        c_x, c_y = centroid(mask)
        # Reflection is about (W-1)/2 while the grid splits at W/3 and 2W/3,
        # so stay a pixel away from the cell boundaries.
        if min(abs(c_x - width / 3), abs(c_x - 2 * width / 3)) < 1.0:
            continue
        if min(abs(c_y - height / 3), abs(c_y - 2 * height / 3)) < 1.0:
            continue
        original = direction(c_x, c_y, width, height)
        m_x, m_y = centroid(BinaryMask.from_array(bits[:, ::-1]))
        assert direction(m_x, m_y, width, height).value == swap_h[original.value]
        f_x, f_y = centroid(BinaryMask.from_array(bits[::-1, :]))
        assert direction(f_x, f_y, width, height).value == swap_v[original.value]
        checked += 1


class TestRegionStats:
    def test_empty_mask(self):
        assert region_stats(BinaryMask.from_array(np.zeros((4, 4), dtype=bool))) == []

    def test_two_disjoint_blocks(self):
        bits = np.zeros((10, 10), dtype=bool)
        bits[1:3, 1:3] = True
        bits[6:8, 6:8] = True
        stats = region_stats(BinaryMask.from_array(bits))
        assert [s.area for s in stats] == [4, 4]
        assert stats[0].bbox == (1, 1, 2, 2)
        assert stats[1].bbox == (6, 6, 7, 7)
        assert stats[0].centroid == (1.5, 1.5)

    def test_matches_flood_fill_oracle(self, rng):
        for connectivity in (4, 8):
            for _ in range(20):
                bits = rng.random((24, 31)) < 0.35
                mask = BinaryMask.from_array(bits)
                stats = region_stats(mask, connectivity=connectivity)
                expected = flood_fill_components(bits.tolist(), connectivity=connectivity)
                assert sum(s.area for s in stats) == mask.foreground_count
                assert len(stats) == len(expected)
                for s, pixels in zip(stats, expected):
                    assert s.area == len(pixels)
                    xs = [x for x, _ in pixels]
                    ys = [y for _, y in pixels]
                    assert s.bbox == (min(xs), min(ys), max(xs), max(ys))
                    assert s.centroid == pytest.approx(centroid_bruteforce(pixels), abs=1e-12)

    def test_connectivity_choice_matters(self):
        bits = np.array([[1, 0], [0, 1]], dtype=bool)
        assert len(region_stats(BinaryMask.from_array(bits), connectivity=4)) == 2
        assert len(region_stats(BinaryMask.from_array(bits), connectivity=8)) == 1
