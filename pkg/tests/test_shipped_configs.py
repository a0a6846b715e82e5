import json
from pathlib import Path

import numpy as np
import pytest

from perihom.cli import main
from perihom.config import build_study_plan, load_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.toml")),
                         ids=lambda p: p.stem)
def test_shipped_config_parses(path):
    cfg = load_config(path)
    build_study_plan(cfg)


def test_laminate_config_reproduces_oracle(capsys):
    code = main(["cell", "--config", str(CONFIG_DIR / "laminate.toml")])
    assert code == 0
    body = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(body["g_eff"], np.diag([1.6, 2.5]), atol=1e-4)
