import math

import numpy as np
import pytest
from scipy import ndimage

from mapweld.elements import MAP_CLASSES, MapClass, MapElement, Point2, VectorMap
from mapweld.grid import DenseMask, GridSpec
from mapweld.skeleton import (
    Skeleton,
    extract_from_frames,
    extract_lines,
    skeletonize,
    trace_skeleton,
)
from mapweld.metrics import matching_distance
from mapweld.synth import NoiseSpec, simulate_frames

EIGHT = np.ones((3, 3), dtype=int)


def zhang_suen_reference(bits: np.ndarray) -> np.ndarray:
    """Per-pixel loop implementation of the same thinning scheme (oracle).

    Includes the library's survivor rule: a sub-iteration that would erase an
    entire 8-connected component spares that component's row-major-first pixel.
    """
    img = bits.astype(int).copy()
    w, h = img.shape

    def neighbors(i, j):
        idx = [
            (i, j + 1), (i + 1, j + 1), (i + 1, j), (i + 1, j - 1),
            (i, j - 1), (i - 1, j - 1), (i - 1, j), (i - 1, j + 1),
        ]
        return [img[a, b] if 0 <= a < w and 0 <= b < h else 0 for a, b in idx]

    changed = True
    while changed:
        changed = False
        for phase in (0, 1):
            to_delete = []
            for i in range(w):
                for j in range(h):
                    if img[i, j] != 1:
                        continue
                    n = neighbors(i, j)
                    b = sum(n)
                    if not 2 <= b <= 6:
                        continue
                    seq = n + [n[0]]
                    a = sum(1 for x, y in zip(seq, seq[1:]) if (x, y) == (0, 1))
                    if a != 1:
                        continue
                    p2, p3, p4, p5, p6, p7, p8, p9 = n
                    if phase == 0:
                        ok = p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
                    else:
                        ok = p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
                    if ok:
                        to_delete.append((i, j))
            labels, n_comp = ndimage.label(img > 0, structure=EIGHT)
            doomed = set()
            for comp in range(1, n_comp + 1):
                comp_cells = {tuple(c) for c in np.argwhere(labels == comp)}
                if comp_cells and comp_cells <= set(to_delete):
                    doomed.add(min(comp_cells, key=lambda c: (c[1], c[0])))
            for c in to_delete:
                if c in doomed:
                    continue
                img[c] = 0
                changed = True
    return img.astype(bool)


def blobby_mask(rng, size=40, n_discs=6):
    bits = np.zeros((size, size), dtype=bool)
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    for _ in range(n_discs):
        cx, cy = rng.uniform(5, size - 5, 2)
        r = rng.uniform(1.6, 4.5)
        bits |= (ii - cx) ** 2 + (jj - cy) ** 2 <= r**2
    return bits


def as_mask(bits, spec=None):
    spec = spec or GridSpec(origin=Point2(0, 0), width=bits.shape[0], height=bits.shape[1], resolution=0.5)
    stack = np.zeros((len(MAP_CLASSES), *bits.shape), dtype=bool)
    stack[MAP_CLASSES.index(MapClass.DIVIDER)] = bits
    return DenseMask(spec=spec, bits=stack)


class TestSkeletonize:
    def test_empty_mask(self):
        sk = skeletonize(as_mask(np.zeros((10, 10), dtype=bool)))
        assert not sk.bits.any()

    def test_single_cell_survives(self):
        bits = np.zeros((10, 10), dtype=bool)
        bits[4, 5] = True
        sk = skeletonize(as_mask(bits))
        assert sk.layer(MapClass.DIVIDER)[4, 5]
        assert sk.layer(MapClass.DIVIDER).sum() == 1

    def test_wide_bar_thins_to_middle_row(self):
        bits = np.zeros((26, 11), dtype=bool)
        bits[2:22, 4:7] = True  # 20 long, 3 wide, middle row j=5
        sk = skeletonize(as_mask(bits)).layer(MapClass.DIVIDER)
        ref = zhang_suen_reference(bits)
        assert np.array_equal(sk, ref)
        js = set(np.nonzero(sk)[1])
        assert js == {5}
        iis = sorted(np.nonzero(sk)[0])
        assert iis[0] <= 4 and iis[-1] >= 19  # ends retract at most 2 cells

    def test_matches_reference_on_random_blobs(self, rng):
        for _ in range(12):
            bits = blobby_mask(rng, size=28, n_discs=4)
            got = skeletonize(as_mask(bits)).layer(MapClass.DIVIDER)
            assert np.array_equal(got, zhang_suen_reference(bits))

    def test_subset_idempotent_connectivity(self, rng):
        for _ in range(30):
            bits = blobby_mask(rng)
            sk = skeletonize(as_mask(bits)).layer(MapClass.DIVIDER)
            assert not (sk & ~bits).any()  # subset
            again = skeletonize(as_mask(sk)).layer(MapClass.DIVIDER)
            assert np.array_equal(again, sk)  # idempotent
            n_before = ndimage.label(bits, structure=EIGHT)[1]
            n_after = ndimage.label(sk, structure=EIGHT)[1]
            assert n_before == n_after  # component count preserved

    def test_thinness_no_2x2_blocks_on_thin_input(self):
        bits = np.zeros((30, 30), dtype=bool)
        bits[3:27, 10] = True
        sk = skeletonize(as_mask(bits)).layer(MapClass.DIVIDER)
        two_by_two = sk[:-1, :-1] & sk[1:, :-1] & sk[:-1, 1:] & sk[1:, 1:]
        assert not two_by_two.any()


class TestTrace:
    def _graph_for(self, bits):
        sk = Skeleton(
            spec=GridSpec(origin=Point2(0, 0), width=bits.shape[0], height=bits.shape[1], resolution=0.5),
            bits=np.stack([bits if c is MapClass.DIVIDER else np.zeros_like(bits) for c in MAP_CLASSES]),
        )
        return trace_skeleton(sk).layers[MapClass.DIVIDER]

    def test_straight_run(self):
        bits = np.zeros((14, 5), dtype=bool)
        bits[2:12, 2] = True  # 10 cells
        g = self._graph_for(bits)
        assert len(g.nodes) == 2
        assert len(g.edges) == 1
        assert len(g.edges[0].cells) == 10  # 2 endpoints + 8 interior

    def test_plus_sign(self):
        bits = np.zeros((11, 11), dtype=bool)
        bits[5, 1:10] = True
        bits[1:10, 5] = True
        g = self._graph_for(bits)
        junctions = [n for n in g.nodes if n == (5, 5)]
        assert junctions == [(5, 5)]
        assert len(g.edges) == 4

    def test_ring(self):
        bits = np.zeros((8, 8), dtype=bool)
        ring = [(2, 2), (3, 2), (4, 2), (5, 3), (5, 4), (4, 5), (3, 5), (2, 4), (2, 3)]
        for c in ring:
            bits[c] = True
        g = self._graph_for(bits)
        assert len(g.edges) == 1
        assert g.edges[0].closed
        assert len(g.nodes) == 1  # the anchor
        assert len(g.edges[0].cells) == len(ring)

    def test_coverage_every_cell_in_exactly_one_path(self, rng):
        for _ in range(15):
            bits = skeletonize(as_mask(blobby_mask(rng, size=30, n_discs=4))).layer(MapClass.DIVIDER)
            g = self._graph_for(bits)
            all_cells = set(zip(*np.nonzero(bits)))
            covered = set(g.isolated)
            interior_seen = []
            node_set = set(g.nodes)
            for e in g.edges:
                covered |= set(e.cells)
                interior_seen += [c for c in e.cells if c not in node_set]
            assert covered == all_cells
            assert len(interior_seen) == len(set(interior_seen))  # exactly one path each


class TestExtractLines:
    def test_empty_skeleton(self):
        sk = Skeleton(
            spec=GridSpec(origin=Point2(0, 0), width=10, height=10, resolution=0.5),
            bits=np.zeros((3, 10, 10), dtype=bool),
        )
        assert extract_lines(sk).elements == ()

    def test_straight_row_to_two_point_divider(self):
        bits = np.zeros((20, 10), dtype=bool)
        bits[0:20, 4] = True
        sk = Skeleton(
            spec=GridSpec(origin=Point2(0, 0), width=20, height=10, resolution=0.5),
            bits=np.stack([bits if c is MapClass.DIVIDER else np.zeros_like(bits) for c in MAP_CLASSES]),
        )
        vmap = extract_lines(sk)
        (el,) = vmap.elements
        assert el.cls is MapClass.DIVIDER
        assert el.xy() == ((0.25, 2.25), (9.75, 2.25))

    def test_isolated_speck_discarded(self):
        bits = np.zeros((10, 10), dtype=bool)
        bits[5, 5] = True
        sk = Skeleton(
            spec=GridSpec(origin=Point2(0, 0), width=10, height=10, resolution=0.5),
            bits=np.stack([bits if c is MapClass.DIVIDER else np.zeros_like(bits) for c in MAP_CLASSES]),
        )
        assert extract_lines(sk).elements == ()

    def test_closed_cycle_emits_closed_element(self):
        bits = np.zeros((30, 30), dtype=bool)
        ring_i = list(range(5, 25))
        for i in ring_i:
            bits[i, 5] = True
            bits[i, 24] = True
        for j in range(5, 25):
            bits[5, j] = True
            bits[24, j] = True
        sk = Skeleton(
            spec=GridSpec(origin=Point2(0, 0), width=30, height=30, resolution=0.5),
            bits=np.stack([bits if c is MapClass.CROSSWALK else np.zeros_like(bits) for c in MAP_CLASSES]),
        )
        vmap = extract_lines(sk)
        (el,) = vmap.elements
        assert el.cls is MapClass.CROSSWALK
        assert el.closed


class TestExtractFromFrames:
    def test_zero_frames_empty_map(self):
        vmap = extract_from_frames([])
        assert vmap.elements == ()

    def test_noiseless_two_line_road(self):
        gt = VectorMap.from_elements(
            [
                MapElement(id="bl", cls=MapClass.BOUNDARY, points=(Point2(0, 3.048), Point2(80, 3.048))),
                MapElement(id="br", cls=MapClass.BOUNDARY, points=(Point2(0, -3.048), Point2(80, -3.048))),
                MapElement(id="d", cls=MapClass.DIVIDER, points=(Point2(0, 0), Point2(80, 0))),
            ],
            pad=5.0,
        )
        from mapweld.autolabel import Centerline
        drive = Centerline(points=(Point2(0, -1.524), Point2(80, -1.524)))
        frames = simulate_frames(gt, drive, step=2.0, noise=NoiseSpec())
        assert len(frames) >= 20
        vmap = extract_from_frames(frames, threshold=3)
        assert len(vmap.of_class(MapClass.BOUNDARY)) == 2
        assert len(vmap.of_class(MapClass.DIVIDER)) == 1
        for el in vmap.elements:
            best = min(
                matching_distance(el, gt_el)
                for gt_el in gt.of_class(el.cls)
            )
            assert best < 0.5

    def test_spurious_noise_below_threshold_suppressed(self):
        gt = VectorMap.from_elements(
            [
                MapElement(id="bl", cls=MapClass.BOUNDARY, points=(Point2(0, 3.048), Point2(80, 3.048))),
                MapElement(id="br", cls=MapClass.BOUNDARY, points=(Point2(0, -3.048), Point2(80, -3.048))),
                MapElement(id="d", cls=MapClass.DIVIDER, points=(Point2(0, 0), Point2(80, 0))),
            ],
            pad=5.0,
        )
        from mapweld.autolabel import Centerline
        drive = Centerline(points=(Point2(0, -1.524), Point2(80, -1.524)))
        noisy = simulate_frames(
            gt, drive, step=2.0,
            noise=NoiseSpec(point_sigma=0.0, dropout_prob=0.0, spurious_rate=0.3, seed=7),
        )
        vmap = extract_from_frames(noisy, threshold=3)
        assert len(vmap.of_class(MapClass.BOUNDARY)) == 2
        assert len(vmap.of_class(MapClass.DIVIDER)) == 1

    def test_extracted_line_fidelity(self):
        # noiseless straight line: every extracted vertex within res*sqrt(2)/2
        gt = VectorMap.from_elements(
            [MapElement(id="d", cls=MapClass.DIVIDER, points=(Point2(0, 0.37), Point2(60, 0.37)))],
            pad=5.0,
        )
        from mapweld.autolabel import Centerline
        drive = Centerline(points=(Point2(0, 0.37), Point2(60, 0.37)))
        frames = simulate_frames(gt, drive, step=2.0, noise=NoiseSpec())
        vmap = extract_from_frames(frames, threshold=3)
        bound = 0.5 * math.sqrt(2.0) / 2.0 + 1e-9
        for el in vmap.elements:
            for x, y in el.xy():
                assert abs(y - 0.37) <= bound
