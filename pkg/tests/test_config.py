import pytest

from shearthin.config import SCHEMA, ConfigError, defaults, load_config, parse_config_text


def test_defaults_validate():
    cfg = defaults()
    cfg.validate()
    assert cfg["p"] == 1.5 and cfg.reg().eps_schedule == (0.1, 0.01, 0.001, 0.0001)


def test_parse_values_and_comments():
    cfg = parse_config_text("# comment\np = 1.8\n\neps_schedule = 1e-1, 1e-3  # trailing\neta_adapt = no\n")
    assert cfg["p"] == 1.8 and cfg["eps_schedule"] == (0.1, 0.001) and cfg["eta_adapt"] is False
    assert cfg.where("p") == "<string>:2"


@pytest.mark.parametrize(
    "text,needle",
    [
        ("bogus = 1", "unknown key 'bogus'"),
        ("p = 1.5\np = 1.6", "duplicate key"),
        ("p = abc", "cannot parse"),
        ("p = 2.5", "outside the accepted range"),
        ("xi.initial = 0.5", "xi(0) = 1"),
        ("scenario = nope", "not one of"),
        ("T = 0.35\ndt = 0.1", "integer multiple"),
        ("k = -1", "nonnegative"),
        ("eps_schedule = 1e-3, 1e-2", "decreasing"),
        ("scenario = mms-p2", "p = 2"),
        ("just words", "expected 'key = value'"),
    ],
)
def test_rejections(text, needle):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text, "cfg.txt")
    assert needle in str(info.value)
    assert str(info.value).startswith("cfg.txt")


def test_xi_message_names_line():
    with pytest.raises(ConfigError) as info:
        parse_config_text("p = 1.5\nxi.initial = 0.5\n", "run.cfg")
    assert str(info.value) == "run.cfg:2: xi.initial: xi(0) = 0.5, but the modulation must satisfy xi(0) = 1"


def test_dump_roundtrip(tmp_path):
    cfg = parse_config_text("scenario = coupled\nmu.family = thermo\nmesh.nx = 3\neps_schedule = 0.1, 0\n")
    path = tmp_path / "c.txt"
    path.write_text(cfg.dump())
    again = load_config(path)
    assert again.values == cfg.values
    assert set(again.values) == set(SCHEMA)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.txt")


def test_with_value_and_builders():
    cfg = defaults().with_value("mu.family", "bounded")
    assert cfg.params().mu.mu1 == 2.0
    assert cfg.step().dt == 0.1
    assert cfg.data().name == "couette"
    with pytest.raises(ConfigError):
        defaults().with_value("p", "3")
