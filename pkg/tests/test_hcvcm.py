import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import hcvcm_oracle, random_hcvcm_dataset, engineered_reference_data
from sonreb.data import Dataset, split_dataset
from sonreb.errors import DomainError, SchemaError
from sonreb.hcvcm import (
    DEFAULT_LIBRARY, REPORT_COLUMNS, FeatureSet, FeatureTransform, apply_transform, feature_column,
    generate_candidates, materialize, reduce_best_per_parent, register_transform, run_generations,
    select_features, write_report,
)
from sonreb.metrics import coeff_det

REPLAY_LIBRARY = ("cos", "square", "cube", "pow4", "pow5", "exp", "sqrt", "ln", "reciprocal")


@pytest.fixture(scope="module")
def engineered():
    return split_dataset(engineered_reference_data(), 0.7, 0)


def small(rn=(3.0, 52.0), upv=(4.0, 5.0), ccs=(100.0, 300.0)):
    return Dataset.from_columns({"upv": list(upv), "rn": list(rn), "ccs": list(ccs)})


class TestApplyTransform:
    def test_square_rn_range(self):
        t = FeatureTransform.make("square", "rn")
        np.testing.assert_array_equal(apply_transform(t, small()), [9.0, 2704.0])

    def test_identity(self):
        d = small()
        t = FeatureTransform.make("identity", "rn")
        assert t.name == "rn"
        np.testing.assert_array_equal(apply_transform(t, d), d.column("rn"))

    @pytest.mark.parametrize("kind", ["ln", "reciprocal"])
    def test_zero_invalidates(self, kind):
        assert apply_transform(FeatureTransform.make(kind, "rn"), small(rn=(0.0, 10.0))) is None

    def test_exp_overflow_invalidates(self):
        d = Dataset.from_columns({"x": [1.0, 800.0]})
        assert apply_transform(FeatureTransform.make("exp", "x"), d) is None

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            FeatureTransform.make("nope", "rn")

    def test_nested_name_rebuilds(self):
        d = small()
        np.testing.assert_allclose(feature_column("square(exp(upv))", d), np.exp(d.column("upv")) ** 2)
        with pytest.raises(SchemaError):
            feature_column("bogus(upv)", d)

    def test_register_transform(self):
        register_transform("half", lambda x: x / 2)
        np.testing.assert_array_equal(feature_column("half(rn)", small()), [1.5, 26.0])


class TestCandidates:
    def test_count_and_finite(self, synthetic):
        cands = generate_candidates(synthetic, ["upv", "rn"], DEFAULT_LIBRARY)
        assert len(cands) <= 28
        for c in cands:
            assert np.all(np.isfinite(apply_transform(c, synthetic)))
            assert 0 <= c.r2_output <= 1

    def test_exp_upv_retained(self, synthetic):
        names = [c.name for c in generate_candidates(synthetic, ["upv"], ("exp",))]
        assert names == ["exp(upv)"]

    def test_reciprocal_rn_zero_dropped(self):
        d = Dataset.from_columns({"upv": [4.0, 4.5, 5.0], "rn": [0.0, 20.0, 30.0], "ccs": [100.0, 200.0, 260.0]})
        names = [c.name for c in generate_candidates(d, ["rn"], ("reciprocal", "square"))]
        assert names == ["square(rn)"]

    def test_r2_uses_training_rows(self, synthetic):
        c = generate_candidates(synthetic, ["rn"], ("square",))[0]
        tr = synthetic.train()
        assert c.r2_output == pytest.approx(coeff_det(tr.column("rn") ** 2, tr.column("ccs")))

    def test_empty_inputs(self, synthetic):
        with pytest.raises(DomainError):
            generate_candidates(synthetic, [], DEFAULT_LIBRARY)


class TestSelect:
    def test_empty(self, synthetic):
        fs = select_features([], synthetic)
        assert len(fs) == 0 and fs.r2_cross.shape == (0, 0)

    def test_rule1_and_rule2_hold(self, engineered):
        cands = generate_candidates(engineered, ["upv", "rn"], DEFAULT_LIBRARY)
        fs = select_features(cands, engineered)
        tr = engineered.train()
        y = tr.column("ccs")
        base = {p: coeff_det(tr.column(p), y) for p in ("upv", "rn")}
        parents = coeff_det(tr.column("upv"), tr.column("rn"))
        for f in fs.selected:
            assert f.r2_output > base[f.parent]
        for i, a in enumerate(fs.selected):
            for j, b in enumerate(fs.selected):
                if a.parent != b.parent:
                    assert fs.r2_cross[i, j] < parents

    def test_replay_structure(self, engineered):
        fs = select_features(generate_candidates(engineered, ["upv", "rn"], REPLAY_LIBRARY), engineered)
        names = set(fs.names)
        assert {"cos(upv)", "square(upv)", "cube(upv)", "pow4(upv)", "pow5(upv)", "exp(upv)", "square(rn)"} <= names
        by_name = {f.name: f for f in fs.selected}
        assert by_name["square(rn)"].r2_output > 0.758

    def test_best_per_parent_keeps_top_scorers(self, engineered):
        fs = select_features(generate_candidates(engineered, ["upv", "rn"], REPLAY_LIBRARY), engineered)
        best = reduce_best_per_parent(fs)
        by_origin = {f.origin: f.name for f in best.selected}
        assert by_origin["rn"] == "square(rn)"
        assert by_origin["upv"] in ("exp(upv)", "square(upv)", "cube(upv)", "pow4(upv)", "pow5(upv)")
        top = max((f for f in fs.selected if f.parent == "upv"), key=lambda f: f.r2_output)
        assert by_origin["upv"] == top.name

    def test_conflict_drops_lower(self):
        # b tracks a exactly, so every transform pair collides with the parents' r2
        rng = np.random.default_rng(3)
        a = rng.uniform(1, 2, 60)
        b = a + rng.normal(scale=0.05, size=60)
        y = a ** 2 + rng.normal(scale=0.05, size=60)
        d = Dataset.from_columns({"a": a, "b": b, "y": y})
        cands = generate_candidates(d, ["a", "b"], ("square", "cube"), output="y")
        fs = select_features(cands, d, "y")
        names, _ = hcvcm_oracle({k: list(d.column(k)) for k in d.columns}, range(60), ["a", "b"], "y",
                                ("square", "cube"))
        assert fs.names == names
        assert {f.parent for f in fs.selected} == {"a"} or {f.parent for f in fs.selected} == {"b"}

    def test_outcomes_cover_all_candidates(self, engineered):
        cands = generate_candidates(engineered, ["upv", "rn"], DEFAULT_LIBRARY)
        fs = select_features(cands, engineered)
        assert [o.feature.name for o in fs.outcomes] == [c.name for c in cands]
        for o in fs.outcomes:
            assert (o.passed_rule2 is None) == (not o.passed_rule1)
            assert o.passed_rule1 == (o.feature.r2_output > o.baseline_r2)
        assert {o.feature.name for o in fs.outcomes if o.passed_rule2} == set(fs.names)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10_000), k=st.integers(2, 3), n=st.integers(30, 200))
    def test_oracle_equivalence(self, seed, k, n):
        rng = np.random.default_rng(seed)
        d, inputs = random_hcvcm_dataset(rng, n, k)
        d = split_dataset(d, 0.7, seed)
        fs = select_features(generate_candidates(d, inputs, DEFAULT_LIBRARY, "y"), d, "y")
        cols = {c: list(d.column(c)) for c in d.columns}
        expected, _ = hcvcm_oracle(cols, list(d.train_idx), inputs, "y", DEFAULT_LIBRARY)
        assert fs.names == expected

    def test_deterministic(self, engineered):
        a = select_features(generate_candidates(engineered, ["upv", "rn"]), engineered)
        b = select_features(generate_candidates(engineered, ["upv", "rn"]), engineered)
        assert a.names == b.names
        np.testing.assert_array_equal(a.r2_cross, b.r2_cross)


class TestGenerations:
    def test_one_generation_is_base_case(self, engineered):
        fs = run_generations(engineered, ["upv", "rn"], DEFAULT_LIBRARY, 1)
        direct = select_features(generate_candidates(engineered, ["upv", "rn"], DEFAULT_LIBRARY), engineered)
        assert fs.names == direct.names

    def test_second_generation_builds_on_first(self, engineered):
        fs = run_generations(engineered, ["upv", "rn"], ("exp", "square"), 2)
        cand_names = {o.feature.name for o in fs.outcomes if o.feature.generation == 2}
        assert "square(exp(upv))" in cand_names
        for f in fs.selected:
            assert f.generation == 2
            assert f.origin in ("upv", "rn")

    def test_early_stop_returns_previous(self):
        # y = x**2 exactly: generation 1 finds square(x) with r2 = 1 and nothing can beat it
        x = np.linspace(1.0, 3.0, 40)
        d = Dataset.from_columns({"x": x, "y": x ** 2})
        gen1 = run_generations(d, ["x"], ("square",), 1, "y")
        fs = run_generations(d, ["x"], ("square",), 3, "y")
        assert gen1.names == ["square(x)"]
        assert fs.names == gen1.names
        assert {o.feature.generation for o in fs.outcomes} == {1, 2}

    def test_nothing_selected_at_all(self):
        d = Dataset.from_columns({"x": [1.0, 2.0, 3.0, 4.0], "y": [1.0, 2.0, 3.0, 4.0]})
        fs = run_generations(d, ["x"], ("square", "cube"), 3, "y")
        assert len(fs) == 0
        assert len(fs.outcomes) == 2

    def test_bad_n_gen(self, engineered):
        with pytest.raises(DomainError):
            run_generations(engineered, ["upv"], DEFAULT_LIBRARY, 0)


class TestReduce:
    def _fs(self, feats):
        return FeatureSet(tuple(feats), np.eye(len(feats)))

    def test_singleton_unchanged(self):
        f = FeatureTransform.make("square", "rn", r2_output=0.8)
        assert reduce_best_per_parent(self._fs([f])).names == ["square(rn)"]

    def test_tie_keeps_first_name(self):
        a = FeatureTransform.make("square", "rn", r2_output=0.8)
        b = FeatureTransform.make("cube", "rn", r2_output=0.8)
        assert reduce_best_per_parent(self._fs([a, b])).names == ["cube(rn)"]

    def test_reference_scores(self):
        scores = {"cos": 0.454, "square": 0.455, "cube": 0.464, "pow4": 0.471, "pow5": 0.476, "exp": 0.478}
        feats = [FeatureTransform.make(k, "upv", r2_output=v) for k, v in scores.items()]
        feats.append(FeatureTransform.make("square", "rn", r2_output=0.776))
        assert reduce_best_per_parent(self._fs(feats)).names == ["exp(upv)", "square(rn)"]


def test_materialize_adds_once(engineered):
    d = materialize(engineered, ["exp(upv)", "square(rn)", "upv"])
    assert d.columns[-2:] == ("exp(upv)", "square(rn)")
    assert materialize(d, ["exp(upv)"]).columns == d.columns


def test_report_csv(engineered, tmp_path):
    fs = run_generations(engineered, ["upv", "rn"], DEFAULT_LIBRARY, 1)
    write_report(fs, tmp_path / "h.csv")
    with open(tmp_path / "h.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert len(rows) - 1 == len(fs.outcomes)
    for row in rows[1:]:
        assert row[5] in ("true", "false")
        assert row[6] in (("true", "false") if row[5] == "true" else ("",))
