import pytest
import yaml

from travelcvx.config import RunConfig, dump_config, from_dict, load_config
from travelcvx.errors import ConfigError


def test_defaults_and_alpha_rule():
    cfg = from_dict({})
    assert cfg == RunConfig()
    assert cfg.alpha() == 1e-8
    assert from_dict({"noise": {"delta": 0.01}}).alpha() == pytest.approx(1e-4)
    assert from_dict({"solver": {"alpha": 0.5}}).alpha() == 0.5


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"solver": {"lamda": 3}},
    {"solver": {"lam": "three"}},
    {"truncation": {"N": 2.5}},
    {"solver": {"metric": "h2"}},
    {"solver": {"projection": "box"}},
    {"solver": {"start": "warm"}},
    {"forward": {"order": 3}},
    {"solver": []},
    [1, 2],
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_int_promoted_to_float_and_lists_to_tuples():
    cfg = from_dict({"solver": {"lam": 2}, "verify": {"deltas": [0.01, 0.02, 0.04]}})
    assert cfg.solver.lam == 2.0 and isinstance(cfg.solver.lam, float)
    assert cfg.verify.deltas == (0.01, 0.02, 0.04)


def test_digest_ignores_output_location(tmp_path):
    a = from_dict({"out": "x", "threads": 4})
    b = from_dict({"out": "y"})
    assert a.digest() == b.digest()
    assert a.digest() != from_dict({"solver": {"lam": 2.0}}).digest()
    path = tmp_path / "c.yaml"
    dump_config(a, path)
    assert load_config(path) == a


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("solver: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    ok = tmp_path / "ok.yaml"
    ok.write_text(yaml.safe_dump({"truncation": {"N": 3, "K": 3}}))
    assert load_config(ok).truncation.N == 3
