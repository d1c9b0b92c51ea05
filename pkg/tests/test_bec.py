"""Bone-events check tests with a flood-fill oracle for the labeling."""

import math

import numpy as np

from evd.bec import BinaryFrame, label_connected_domains, mark_bone_events, project_frame
from evd.core import EventStream

from conftest import random_stream


def flood_fill_labeling(occ):
    """Oracle: breadth-first flood fill, ids dense by raster-first pixel."""
    labels = np.zeros(occ.shape, dtype=np.int32)
    next_id = 0
    for y in range(occ.shape[0]):
        for x in range(occ.shape[1]):
            if occ[y, x] and labels[y, x] == 0:
                next_id += 1
                stack = [(y, x)]
                labels[y, x] = next_id
                while stack:
                    cy, cx = stack.pop()
                    for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                        if (
                            0 <= ny < occ.shape[0]
                            and 0 <= nx < occ.shape[1]
                            and occ[ny, nx]
                            and labels[ny, nx] == 0
                        ):
                            labels[ny, nx] = next_id
                            stack.append((ny, nx))
    sizes = np.bincount(labels.ravel(), minlength=next_id + 1).astype(np.int64)
    sizes[0] = 0
    return labels, sizes


class TestProjectFrame:
    def test_empty_window(self, geometry):
        frame = project_frame(EventStream.empty(), geometry)
        assert not frame.occupancy.any()

    def test_multiple_events_one_pixel(self, geometry):
        stream = EventStream([1, 2, 3, 4, 5], [7] * 5, [9] * 5, [1, -1, 1, -1, 1])
        frame = project_frame(stream, geometry)
        assert frame.occupancy.sum() == 1 and frame.occupancy[9, 7]

    def test_occupancy_equals_coordinate_set(self, rng, geometry):
        stream = random_stream(rng, 300)
        frame = project_frame(stream, geometry)
        expected = {(int(x), int(y)) for x, y in zip(stream.x, stream.y)}
        got = {(int(x), int(y)) for y, x in zip(*np.nonzero(frame.occupancy))}
        assert got == expected


class TestLabeling:
    def test_single_pixel(self):
        occ = np.zeros((4, 4), dtype=bool)
        occ[2, 1] = True
        lab = label_connected_domains(BinaryFrame(occ))
        assert lab.n_components == 1
        assert lab.size_of[1] == 1 and lab.label_of[2, 1] == 1

    def test_plus_shape(self):
        occ = np.zeros((5, 5), dtype=bool)
        occ[2, 1:4] = True
        occ[1:4, 2] = True
        lab = label_connected_domains(BinaryFrame(occ))
        assert lab.n_components == 1 and lab.size_of[1] == 5

    def test_diagonal_is_not_connected(self):
        occ = np.zeros((3, 3), dtype=bool)
        occ[0, 0] = occ[1, 1] = True
        lab = label_connected_domains(BinaryFrame(occ))
        assert lab.n_components == 2

    def test_random_frames_match_flood_fill(self, rng):
        for _ in range(100):
            occ = rng.random((16, 16)) < rng.uniform(0.1, 0.7)
            lab = label_connected_domains(BinaryFrame(occ))
            ref_labels, ref_sizes = flood_fill_labeling(occ)
            assert np.array_equal(lab.label_of, ref_labels)
            assert np.array_equal(lab.size_of, ref_sizes)

    def test_sizes_sum_to_occupied(self, rng):
        occ = rng.random((32, 32)) < 0.4
        lab = label_connected_domains(BinaryFrame(occ))
        assert lab.size_of.sum() == occ.sum()


class TestMarkBoneEvents:
    def test_isolated_pixel_not_bone(self, geometry):
        stream = EventStream([10], [5], [5], [1])
        lab = label_connected_domains(project_frame(stream, geometry))
        assert not mark_bone_events(stream, lab, tau=2).any()

    def test_adjacent_pixels_are_bone(self, geometry):
        stream = EventStream([10, 20, 30], [5, 6, 5], [5, 5, 5], [1, 1, -1])
        lab = label_connected_domains(project_frame(stream, geometry))
        assert mark_bone_events(stream, lab, tau=2).all()

    def test_event_pile_counts_pixels_not_events(self, geometry):
        stream = EventStream(list(range(100)), [3] * 100, [3] * 100, [1] * 100)
        lab = label_connected_domains(project_frame(stream, geometry))
        assert not mark_bone_events(stream, lab, tau=2).any()

    def test_tau_one_marks_all_and_inf_none(self, rng, geometry):
        stream = random_stream(rng, 50)
        lab = label_connected_domains(project_frame(stream, geometry))
        assert mark_bone_events(stream, lab, tau=1).all()
        assert not mark_bone_events(stream, lab, tau=math.inf).any()

    def test_monotone_in_tau(self, rng, geometry):
        stream = random_stream(rng, 200)
        lab = label_connected_domains(project_frame(stream, geometry))
        previous = mark_bone_events(stream, lab, tau=1)
        for tau in (2, 3, 5, 9):
            current = mark_bone_events(stream, lab, tau=tau)
            assert not np.any(current & ~previous)
            previous = current

    def test_permutation_invariant(self, rng, geometry):
        stream = random_stream(rng, 120)
        lab = label_connected_domains(project_frame(stream, geometry))
        flags = mark_bone_events(stream, lab, tau=2)
        perm = rng.permutation(len(stream))
        shuffled = stream.take(perm)
        lab2 = label_connected_domains(project_frame(shuffled, geometry))
        flags2 = mark_bone_events(shuffled, lab2, tau=2)
        assert np.array_equal(flags2, flags[perm])
