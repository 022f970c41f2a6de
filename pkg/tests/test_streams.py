import numpy as np
import pytest

from mmsb_online import (Dyad, DyadRecord, ObservationStream, Role,
                         StreamFormatError, SyntheticConfig, cv_split,
                         generate_synthetic, load_edge_list, load_ground_truth,
                         load_mask, save_edge_list, save_ground_truth,
                         save_mask)
from mmsb_online.streams import assortative_matrix, permute_rows


class TestLoadEdgeList:
    def _load(self, tmp_path, text):
        path = tmp_path / "edges.txt"
        path.write_text(text, encoding="utf-8")
        return load_edge_list(path)

    def test_duplicate_present_links_collapse(self, tmp_path):
        stream = self._load(tmp_path, "1 a b 1\n1 a b 1\n")
        assert len(stream) == 1

    def test_conflicting_values_rejected(self, tmp_path):
        with pytest.raises(StreamFormatError):
            self._load(tmp_path, "1 a b 1\n1 a b 0\n")

    def test_self_loop_rejected_with_line_number(self, tmp_path):
        with pytest.raises(StreamFormatError, match=":2:"):
            self._load(tmp_path, "1 a b 1\n1 a a 1\n")

    def test_wrong_arity_rejected(self, tmp_path):
        with pytest.raises(StreamFormatError, match=":1:"):
            self._load(tmp_path, "1 a b\n")

    def test_non_binary_value_rejected(self, tmp_path):
        with pytest.raises(StreamFormatError, match="value"):
            self._load(tmp_path, "1 a b 2\n")

    def test_non_positive_interval_rejected(self, tmp_path):
        with pytest.raises(StreamFormatError, match="interval"):
            self._load(tmp_path, "0 a b 1\n")

    def test_sorted_by_interval_stable(self, tmp_path):
        stream = self._load(tmp_path, "2 a b 1\n1 c d 1\n1 e f 0\n")
        assert [r.interval for r in stream.records] == [1, 1, 2]
        assert stream.records[0].dyad == Dyad("c", "d")
        assert stream.records[1].dyad == Dyad("e", "f")

    def test_comments_and_blanks_skipped(self, tmp_path):
        stream = self._load(tmp_path, "# header\n\n1 a b 1  # trailing\n")
        assert len(stream) == 1

    def test_empty_file_empty_stream(self, tmp_path):
        stream = self._load(tmp_path, "")
        assert len(stream) == 0
        assert stream.horizon == 0

    def test_first_appearance_intervals(self, tmp_path):
        stream = self._load(tmp_path, "1 a b 1\n2 b c 1\n")
        assert stream.nodes == {"a": 1, "b": 1, "c": 2}


class TestRoundTrip:
    def test_save_load_identity(self, tmp_path):
        text = "2 a b 1\n1 c d 0\n3 b c 1\n"
        src = tmp_path / "src.txt"
        src.write_text(text, encoding="utf-8")
        stream = load_edge_list(src)
        out = tmp_path / "out.txt"
        save_edge_list(stream, out)
        again = load_edge_list(out)
        assert again.records == stream.records
        assert again.horizon == stream.horizon
        out2 = tmp_path / "out2.txt"
        save_edge_list(again, out2)
        assert out.read_text() == out2.read_text()


class TestGenerateSynthetic:
    def _config(self, **kw):
        base = dict(nodes=20, groups=2, intervals=4, records_per_interval=30,
                    alpha_gen=0.1,
                    schedule=((1, assortative_matrix(2, 0.8, 0.1)),), seed=1)
        base.update(kw)
        return SyntheticConfig(**base)

    def test_deterministic(self):
        a, _ = generate_synthetic(self._config())
        b, _ = generate_synthetic(self._config())
        assert a.records == b.records

    def test_near_zero_blocks_emit_no_links(self):
        cfg = self._config(schedule=((1, np.full((2, 2), 1e-12)),),
                           nodes=110, records_per_interval=2500)
        stream, _ = generate_synthetic(cfg)
        assert all(r.value == 0 for r in stream.records)

    def test_single_group_link_rate(self):
        # one dominant group, B[0][0] = 0.3: empirical rate ~ 0.3
        cfg = SyntheticConfig(nodes=110, groups=2, intervals=4,
                              records_per_interval=2500, alpha_gen=1e-8,
                              schedule=((1, np.array([[0.3, 0.3], [0.3, 0.3]])),),
                              seed=5)
        stream, _ = generate_synthetic(cfg)
        rate = np.mean([r.value for r in stream.records])
        assert rate == pytest.approx(0.3, abs=0.02)

    def test_schedule_switch_block_densities(self):
        # hard memberships; measure per-block link rates before and after the
        # switch against the scheduled matrices
        k = 3
        before = assortative_matrix(k, 0.9, 0.05)
        after = permute_rows(before)
        cfg = SyntheticConfig(nodes=150, groups=k, intervals=2,
                              records_per_interval=10_000, alpha_gen=1e-8,
                              schedule=((1, before), (2, after)), seed=9)
        stream, truth = generate_synthetic(cfg)
        dominant = {node: int(np.argmax(pi)) for node, pi in truth.memberships.items()}
        for t, expected in ((1, before), (2, after)):
            hits = np.zeros((k, k))
            totals = np.zeros((k, k))
            for rec in stream.records:
                if rec.interval != t:
                    continue
                g = dominant[rec.dyad.initiator]
                h = dominant[rec.dyad.receiver]
                totals[g, h] += 1
                hits[g, h] += rec.value
            rates = hits / np.maximum(totals, 1)
            assert np.all(totals > 50)
            np.testing.assert_allclose(rates, expected, atol=0.03)

    def test_no_dyad_repeats_across_horizon(self):
        stream, _ = generate_synthetic(self._config())
        dyads = [r.dyad for r in stream.records]
        assert len(dyads) == len(set(dyads))

    def test_budget_exceeded_rejected(self):
        with pytest.raises(ValueError):
            self._config(nodes=5, records_per_interval=30)

    def test_bad_schedule_rejected(self):
        with pytest.raises(ValueError):
            self._config(schedule=((2, assortative_matrix(2)),))
        with pytest.raises(ValueError):
            self._config(schedule=((1, np.array([[1.0, 0.5], [0.5, 0.5]])),))

    def test_ground_truth_round_trip(self, tmp_path):
        _, truth = generate_synthetic(self._config())
        path = tmp_path / "truth.json"
        save_ground_truth(truth, path)
        loaded = load_ground_truth(path)
        assert set(loaded.memberships) == set(truth.memberships)
        for node, pi in truth.memberships.items():
            np.testing.assert_allclose(loaded.memberships[node], pi)
        assert len(loaded.schedule) == len(truth.schedule)
        np.testing.assert_allclose(loaded.schedule[0][1], truth.schedule[0][1])


class TestCvSplit:
    def _universe(self, n):
        return [Dyad(i, i + 100) for i in range(n)]

    def test_ten_dyads_five_folds(self):
        masks = cv_split(self._universe(10), rng=np.random.default_rng(0))
        assert len(masks) == 5
        for mask in masks:
            train = [d for d, r in mask.roles.items() if r is Role.TRAIN]
            held = [d for d, r in mask.roles.items() if r is not Role.TRAIN]
            assert len(train) == 8
            assert len(held) == 2

    def test_partition_fuzz(self):
        rng = np.random.default_rng(4)
        for n in (11, 23, 57):
            universe = self._universe(n)
            masks = cv_split(universe, rng=rng)
            held_union = []
            for mask in masks:
                held = {d for d, r in mask.roles.items() if r is not Role.TRAIN}
                held_union.extend(held)
                assert set(mask.roles) == set(universe)
                sizes = {len(held)}
                assert sizes <= {n // 5, n // 5 + 1}
            assert sorted(held_union, key=repr) == sorted(universe, key=repr)

    def test_deterministic_under_seed(self):
        a = cv_split(self._universe(20), rng=np.random.default_rng(3))
        b = cv_split(self._universe(20), rng=np.random.default_rng(3))
        for ma, mb in zip(a, b):
            assert ma.roles == mb.roles

    def test_validation_fraction(self):
        masks = cv_split(self._universe(40), validation_fraction=0.25,
                         rng=np.random.default_rng(1))
        for mask in masks:
            val = mask.dyads_with_role(Role.VALIDATION)
            test = mask.dyads_with_role(Role.TEST)
            assert len(val) == 2
            assert len(test) == 6

    def test_unknown_dyads_are_train(self):
        mask = cv_split(self._universe(10), rng=np.random.default_rng(0))[0]
        assert mask.role_of(Dyad("zzz", "www")) is Role.TRAIN

    def test_empty_universe_rejected(self):
        with pytest.raises(ValueError):
            cv_split([], rng=np.random.default_rng(0))


class TestMaskIO:
    def test_round_trip(self, tmp_path):
        mask = cv_split([Dyad(f"a{i}", f"b{i}") for i in range(9)],
                        rng=np.random.default_rng(2))[3]
        path = tmp_path / "mask.txt"
        save_mask(mask, path)
        loaded = load_mask(path)
        assert loaded.fold_index == 3
        assert {(d.initiator, d.receiver): r for d, r in loaded.roles.items()} \
            == {(str(d.initiator), str(d.receiver)): r for d, r in mask.roles.items()}

    def test_missing_fold_line_rejected(self, tmp_path):
        path = tmp_path / "mask.txt"
        path.write_text("a b train\n", encoding="utf-8")
        with pytest.raises(StreamFormatError):
            load_mask(path)

    def test_bad_role_rejected(self, tmp_path):
        path = tmp_path / "mask.txt"
        path.write_text("fold 0\na b holdout\n", encoding="utf-8")
        with pytest.raises(StreamFormatError):
            load_mask(path)


class TestStreamValidation:
    def test_conflict_within_interval_rejected(self):
        recs = [DyadRecord(Dyad(0, 1), 1, 1), DyadRecord(Dyad(0, 1), 0, 1)]
        with pytest.raises(StreamFormatError):
            ObservationStream.from_records(recs)

    def test_horizon_override(self):
        stream = ObservationStream.from_records(
            [DyadRecord(Dyad(0, 1), 1, 2)], horizon=5)
        assert stream.horizon == 5
        with pytest.raises(StreamFormatError):
            ObservationStream.from_records([DyadRecord(Dyad(0, 1), 1, 7)],
                                           horizon=5)
