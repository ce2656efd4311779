import pytest

from nsf.config import build_config, check_output_dir, load_config, validate_config
from nsf.errors import ConfigError


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_valid_file_and_aliases(tmp_path):
    p = write(tmp_path, f"""
[synth]
n = 500
rho = 0.8
B = 2
[transform]
lam = 0.01
lr = 0.005
loss_form = l2norm
[run]
seeds = 0, 2
output = {tmp_path / 'out'}
""")
    assert validate_config(p) == []
    cfg = load_config(p)
    assert cfg.synth.bias_scale == 2.0 and cfg.synth.rho == 0.8
    assert cfg.transform.lam == 0.01 and cfg.transform.learning_rate == 0.005
    assert cfg.seeds == [0, 2]


def test_rho_out_of_range_named(tmp_path):
    p = write(tmp_path, f"[synth]\nrho = 0.4\n[run]\noutput = {tmp_path}\n")
    assert validate_config(p) == ["synth.rho: rho must be in (0.5, 1)"]


def test_empty_seeds(tmp_path):
    p = write(tmp_path, f"[synth]\n[run]\nseeds =\noutput = {tmp_path}\n")
    assert "run.seeds: seed list must be non-empty" in validate_config(p)


def test_all_problems_listed(tmp_path):
    p = write(tmp_path, """
[synth]
rho = 2
dim = 1
[transform]
steps = 0
[classifier]
learning_rate = -1
bogus = 3
[run]
discard_fractions = 1.5
""")
    probs = validate_config(p)
    for key in ("synth.rho", "synth.dim", "transform.steps", "classifier.learning_rate",
                "classifier.bogus", "run.output", "run.discard_fractions"):
        assert any(q.startswith(key) for q in probs), key


def test_parse_error_has_line(tmp_path):
    p = write(tmp_path, "[synth]\nn = 10\nthis line is broken\n")
    probs = validate_config(p)
    assert len(probs) == 1 and "line 3" in probs[0]


def test_bad_type(tmp_path):
    p = write(tmp_path, f"[synth]\nn = many\n[run]\noutput = {tmp_path}\n")
    assert any("cannot parse 'many'" in q for q in validate_config(p))


def test_input_rules(tmp_path):
    _, probs = build_config({"run": {"output": str(tmp_path)}})
    assert probs == ["input: need a [synth] section or input.data"]
    _, probs = build_config({"input": {"data": str(tmp_path / "missing.csv")}, "run": {"output": str(tmp_path)}})
    assert any("file not found" in q for q in probs)


def test_output_dir_rules(tmp_path):
    new = tmp_path / "fresh"
    assert check_output_dir(new) is None and not new.exists()
    assert check_output_dir(new, create=True) is None and new.is_dir()
    assert "does not exist" in check_output_dir(tmp_path / "a" / "b")
    f = tmp_path / "file"
    f.write_text("")
    assert "not a directory" in check_output_dir(f)


def test_load_config_raises(tmp_path):
    with pytest.raises(ConfigError, match="synth.rho"):
        load_config(None, {"synth": {"rho": "0.3"}, "run": {"output": str(tmp_path)}})
