import json
import math

import numpy as np
import pytest

from ergobound.model import (
    BirthDeathSpec,
    DiffusionSpec,
    ModelError,
    SingleDeathSpec,
    StableSdeSpec,
    TimeChangedStableSpec,
    TreeSpec,
    load_model,
    parse_model,
    tolerance_from,
    validate,
)
from ergobound.numerics import Tolerance


def _write(tmp_path, doc, name="m.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return p


def test_two_state_read_back(tmp_path):
    spec = load_model(_write(tmp_path, {"family": "birth_death",
                                        "params": {"birth": "1", "death": "1", "size": 2}}))
    assert isinstance(spec, BirthDeathSpec)
    assert spec.size == 2
    assert spec.b(0) == 1.0 and spec.a(1) == 1.0


def test_zero_death_rate_rejected(tmp_path):
    path = _write(tmp_path, {"family": "birth_death", "params": {"birth": "1", "death": "0"}})
    with pytest.raises(ModelError, match="death"):
        load_model(path)


def test_negative_rate_reports_index():
    with pytest.raises(ModelError, match="at 5"):
        parse_model({"family": "birth_death", "params": {"birth": "5 - i", "death": "1"}})


def test_quartic_diffusion_drift():
    from ergobound.continuum_bounds import diff_c

    spec = parse_model({"family": "diffusion", "params": {"a": "1", "b": "-4*x^3"}})
    assert isinstance(spec, DiffusionSpec) and spec.domain == "half_line"
    xs = np.array([0.0, 0.5, 2.0])
    assert np.allclose(diff_c(spec, xs), 1 - xs ** 4, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize(
    "doc, where",
    [
        ({"family": "nope", "params": {}}, "family"),
        ({"family": "birth_death"}, "params"),
        ({"family": "birth_death", "params": {"birth": "1"}}, "death"),
        ({"family": "birth_death", "params": {"birth": "1", "death": "1", "extra": 1}}, "extra"),
        ({"family": "birth_death", "params": {"birth": "1", "death": "i^"}}, "params.death"),
        ({"family": "diffusion", "params": {"a": "-1", "b": "0"}}, "a"),
        ({"family": "tc_stable", "params": {"alpha": 2.5, "a": "1"}}, "alpha"),
        ({"family": "stable_sde", "params": {"alpha": 1.5, "dim": 0, "drift_radial": "-x"}}, "dim"),
    ],
)
def test_schema_violations(doc, where):
    with pytest.raises(ModelError) as err:
        parse_model(doc)
    assert where in str(err.value)


def test_malformed_json(tmp_path):
    with pytest.raises(ModelError, match="line 1"):
        load_model(_write(tmp_path, '{"family": '))


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_model(tmp_path / "absent.json")


def test_single_death_table_and_tail():
    spec = parse_model({"family": "single_death", "params": {
        "table": [[0, 1, 0.5], [2, 0, 1], [0, 3, 0]],
        "tail": {"down": "(i+1)^2", "up": ["1", "0.5"]},
    }})
    assert isinstance(spec, SingleDeathSpec)
    assert spec.row(1) == {0: 2.0, 2: 1.0}
    assert spec.row(5)[4] == 36.0 and spec.row(5)[6] == 1.0 and spec.row(5)[7] == 0.5


def test_single_death_skip_down_rejected():
    with pytest.raises(ModelError):
        parse_model({"family": "single_death", "params": {"table": [[0, 1, 0], [1, 0, 1], [1, 1, 0]]}})


def test_tree_document():
    spec = parse_model({"family": "tree", "params": {
        "nodes": [{"id": "o"}, {"id": "a", "parent": "o", "up": 1, "down": 2}],
        "rays": [{"from": "a", "up": "1", "down": "k^2"}],
    }})
    assert isinstance(spec, TreeSpec)
    assert spec.root == "o" and spec.depth()["a"] == 1


def test_tree_two_roots_rejected():
    with pytest.raises(ModelError):
        parse_model({"family": "tree", "params": {"nodes": [{"id": "o"}, {"id": "p"}]}})


def test_stable_and_tc_families():
    s = parse_model({"family": "stable_sde", "params": {"alpha": 1.5, "dim": 1, "drift_radial": "-x*abs(x)"}})
    assert isinstance(s, StableSdeSpec)
    assert s.profile(2.0) == pytest.approx(2.0)
    t = parse_model({"family": "tc_stable", "params": {"alpha": 1.5, "a": "(1+abs(x))^2"}})
    assert isinstance(t, TimeChangedStableSpec)


def test_radial_diffusion():
    spec = parse_model({"family": "diffusion", "params": {"domain": "radial", "beta_bar": "2/r - r^3", "r0": 1}})
    assert spec.domain == "radial" and spec.r0 == 1.0 and spec.D == math.inf


def test_validation_is_idempotent(quadratic_chain):
    assert validate(quadratic_chain) is None
    assert validate(quadratic_chain) is None


def test_numerics_block_and_overrides():
    spec = parse_model({"family": "birth_death", "params": {"birth": "1", "death": "1", "size": 3},
                        "numerics": {"rel": 1e-8, "truncation": 50}})
    tol = tolerance_from(spec)
    assert tol.rel == 1e-8 and tol.abs == Tolerance().abs
    assert tolerance_from(spec, {"rel": 1e-6, "abs": None}).rel == 1e-6


def test_unknown_numerics_key():
    with pytest.raises(ModelError, match="numerics"):
        parse_model({"family": "birth_death", "params": {"birth": "1", "death": "1"}, "numerics": {"x": 1}})
