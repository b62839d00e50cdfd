from pathlib import Path

import pytest

from bloch2d.config import ConfigError, ForceCase, RunConfig, parse_config


def test_minimal_file_takes_defaults():
    cfg = parse_config("potential.V0 = -1.5\n")
    assert cfg.potential.V0 == -1.5 and cfg.potential.N_c == 7 and cfg.potential.M == 32
    assert cfg.hoppings is None
    assert cfg.packet.sigma == 20.0 and cfg.packet.k0 == (0.05, 0.03) and cfg.packet.L is None
    assert cfg.evolution.t_end == 200.0 and cfg.evolution.dt is None
    assert cfg.outputs.plot is True


def test_default_force_case():
    cfg = parse_config("force.F = 0.5 -0.5\nforce.qr = 1 -1\n")
    assert cfg.force.cases == (ForceCase((0.5, -0.5), (1, -1)),)


def test_several_cases_and_auto_direction():
    cfg = parse_config("force.F = 0.5 -0.5 ; 0.4 -0.8\nforce.qr = 1 -1 ; auto\n")
    assert cfg.force.cases[1] == ForceCase((0.4, -0.8), None)


def test_comments_blank_lines_and_overrides():
    cfg = parse_config("# header\n\npacket.sigma = 10  # narrow\npacket.sigma = 12\n")
    assert cfg.packet.sigma == 12.0


@pytest.mark.parametrize("text, key, line", [
    ("packet.sigma = -3", "packet.sigma", 1),
    ("\npacket.L = 120", "packet.L", 2),
    ("potential.V0 = 0", "potential.V0", 1),
    ("potential.N_c = 2", "potential.N_c", 1),
    ("evolution.dt = 0", "evolution.dt", 1),
    ("evolution.boundary_band = 0", "evolution.boundary_band", 1),
    ("force.F = 1 1\nforce.qr = 2 2", "force.qr", 2),
])
def test_range_errors_name_the_field(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert key in str(info.value)
    assert info.value.key == key and info.value.line == line


def test_unknown_key_and_syntax_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match=r"line 2: unknown key 'packet\.sigmaa'"):
        parse_config("packet.sigma = 3\npacket.sigmaa = 4\n")
    with pytest.raises(ConfigError, match="line 1: expected"):
        parse_config("packet.sigma 3\n")
    with pytest.raises(ConfigError, match="line 1: packet.k0: expected two values"):
        parse_config("packet.k0 = 0.1\n")
    with pytest.raises(ConfigError, match="line 1: packet.L"):
        parse_config("packet.L = eleven\n")
    with pytest.raises(ConfigError, match="no value"):
        parse_config("packet.L =\n")


def test_model_source_is_exclusive(tmp_path):
    with pytest.raises(ConfigError, match="not both"):
        parse_config("potential.V0 = -1\nhoppings.table = 1 0 0.1 ; -1 0 0.1\n")
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config("hoppings.file = missing.txt\n", base_dir=tmp_path)
    (tmp_path / "J.txt").write_text("1 0 0.1\n-1 0 0.1\n")
    cfg = parse_config("hoppings.file = J.txt\n", base_dir=tmp_path)
    assert cfg.potential is None and cfg.hoppings.file == tmp_path / "J.txt"


def test_force_lists_must_match():
    with pytest.raises(ConfigError, match="force.qr lists 1 cases but force.F lists 2"):
        parse_config("force.F = 1 0 ; 0 1\nforce.qr = 1 0\n")
    with pytest.raises(ConfigError, match="without force.F"):
        parse_config("force.qr = 1 0\n")


def test_provenance_reparses_to_the_same_config():
    text = ("potential.V0 = -2.0\npacket.L = 151\nforce.F = 0.5 -0.5 ; 0.3 0.1\n"
            "force.qr = 1 -1 ; auto\nevolution.dt = 0.01\noutputs.plot = false\n")
    cfg = parse_config(text)
    again = parse_config("\n".join(cfg.provenance()))
    assert again == cfg
    assert parse_config("\n".join(RunConfig().provenance())) == RunConfig()


def test_inline_table_provenance_round_trip():
    cfg = parse_config("hoppings.table = 1 0 0.1 ; -1 0 0.1\n")
    assert parse_config("\n".join(cfg.provenance())) == cfg
    assert cfg.outputs.directory == Path("out")
