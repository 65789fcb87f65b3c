import json

import pytest

from schwarzlab.cli import main, parse_config, print_summary, run_experiment
from schwarzlab.errors import ConfigError
from schwarzlab.operators import MethodKind


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj, indent=2))
    return p


def test_aliases_and_defaults():
    cfg = parse_config('{"dim": 1, "cells": 32, "blocks": 4, "layers": 2}')
    assert (cfg.cells_per_side, cfg.blocks_per_side, cfg.overlap_layers) == (32, 4, 2)
    assert cfg.methods == [k.value for k in MethodKind]


@pytest.mark.parametrize("text,line,fragment", [
    ('{\n "dim": 1,\n "cells": 10,\n "blocks": 4,\n "layers": 1\n}', 4, "do not divide"),
    ('{\n "dim": 3,\n "cells": 8,\n "blocks": 2,\n "layers": 1\n}', 2, "expected 1 or 2"),
    ('{\n "dim": 1,\n "cells": 8,\n "blocks": 2,\n "layers": 1,\n "colour": 3\n}', 6, "unknown key"),
    ('{\n "dim": 1,\n "cells": 8,\n "blocks": 4,\n "layers": 5\n}', 5, "covers the whole domain"),
    ('{\n "dim": 1,\n "cells": 8,\n "blocks": 2,\n "layers": 1,\n "epsilon": [0]\n}', 6, "epsilon"),
    ('{\n "dim": 1,\n "cells": 8,\n "blocks": 2,\n "layers": 1,\n "methods": ["XX"]\n}', 6, "methods"),
    ('{\n "dim": 1,\n "cells": 8,\n', 4, "invalid JSON"),
])
def test_validation_messages(text, line, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert str(err.value).startswith(f"line {line}:") and fragment in str(err.value)


def test_invalid_config_emits_nothing(tmp_path, capsys):
    cfg = write(tmp_path, {"dim": 1, "cells": 10, "blocks": 4, "layers": 1})
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 1
    assert not out.exists()
    assert "do not divide" in capsys.readouterr().err


def test_check_subcommand(tmp_path, capsys):
    cfg = write(tmp_path, {"dim": 2, "cells": 16, "blocks": 2, "layers": 1})
    assert main(["check", str(cfg), "--seed", "7"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 7


def test_as_only_run(tmp_path, capsys):
    cfg = parse_config('{"dim": 1, "cells": 32, "blocks": 4, "layers": 2, "methods": ["AS"], "tol": 1e-8}')
    manifest, code = run_experiment(cfg, tmp_path)
    assert code == 0
    rows = (tmp_path / "bounds.csv").read_text().splitlines()
    lions = [r for r in rows if r.startswith("lions_")]
    assert len(lions) == 2 and all(",assert,true," in r for r in lions)
    for name in ("constants.json", "bounds.csv", "solver_table.csv", "spectrum_AS.csv"):
        assert name in manifest["files"] and len(manifest["files"][name]["sha256"]) == 64
    text = print_summary(tmp_path / "manifest.json")
    body = text.splitlines()[2:]
    assert len(body) == 1 and body[0].startswith("AS")
    assert float(body[0].split()[3]) >= 1.0


def test_solver_table_shape(tmp_path):
    cfg = parse_config('{"dim": 1, "cells": 16, "blocks": 4, "layers": 1, "epsilon": [0.1], '
                       '"methods": ["AS", "FE_T", "EF_T", "RAS_CUT", "OBDD_CUT"]}')
    run_experiment(cfg, tmp_path)
    lines = (tmp_path / "solver_table.csv").read_text().splitlines()
    pairs = [tuple(l.split(",")[:2]) for l in lines[1:]]
    assert pairs == [("NONE", "CG"), ("NONE", "GMRES"), ("AS", "CG"), ("AS", "GMRES"), ("FE_T", "GMRES"),
                     ("EF_T", "GMRES"), ("RAS_CUT", "GMRES"), ("OBDD_CUT", "GMRES")]


def test_empty_methods_header_only(tmp_path):
    cfg = parse_config('{"dim": 1, "cells": 16, "blocks": 4, "layers": 1, "methods": []}')
    run_experiment(cfg, tmp_path)
    assert len(print_summary(tmp_path / "manifest.json").splitlines()) == 2


def test_full_run_sorted_and_summary_cli(tmp_path, capsys):
    cfg = write(tmp_path, {"dim": 1, "cells": 16, "blocks": 4, "layers": 1, "methods": ["FEPS_T", "OBDD_CUT", "AS"],
                           "epsilon": [0.004, 0.5]})
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out)]) in (0, 2)
    capsys.readouterr()
    assert main(["summary", str(out / "manifest.json")]) == 0
    labels = [l.split()[0] for l in capsys.readouterr().out.splitlines()[2:]]
    assert labels == ["AS", "OBDD_CUT", "FEPS_T(0.5)", "FEPS_T(0.004)"]
    assert main(["summary", str(out)]) == 0
    assert capsys.readouterr().out.splitlines()[2].split()[0] == "AS"


def test_summary_missing_file(tmp_path, capsys):
    assert main(["summary", str(tmp_path / "nope.json")]) == 1


def test_failed_bound_exit_code(tmp_path, monkeypatch):
    import schwarzlab.cli as cli
    from schwarzlab.diagnostics import BoundReport

    real = cli.verify_bounds
    monkeypatch.setattr(cli, "verify_bounds",
                        lambda *a: real(*a) + [BoundReport("forced", "AS", 2.0, 1.0)])
    cfg = parse_config('{"dim": 1, "cells": 16, "blocks": 4, "layers": 1, "methods": ["AS"]}')
    manifest, code = run_experiment(cfg, tmp_path)
    assert code == 2 and manifest["failed_assertions"] == ["AS: forced"]


def test_stage_failure_named(tmp_path):
    from schwarzlab.cli import StageError

    cfg = parse_config('{"dim": 1, "cells": 16, "blocks": 4, "layers": 1, "dense_cap": 3}')
    with pytest.raises(StageError) as err:
        run_experiment(cfg, tmp_path)
    assert "stage 'operators'" in str(err.value)
