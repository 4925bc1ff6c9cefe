import numpy as np
import pytest

from tkgode.checkpoint import check_compatible, load_checkpoint, save_checkpoint
from tkgode.exceptions import ParseError, ShapeError
from tkgode.model import init_params


@pytest.mark.parametrize("decoder", ["distmult", "tucker"])
def test_exact_roundtrip(tmp_path, decoder):
    p = init_params(np.random.default_rng(3), 5, 4, 3, 2, decoder)
    p.arrays["layer0.delta"][0, 0] = 1 / 3  # needs all 17 digits
    save_checkpoint(tmp_path / "c.txt", p, {"dim": 3})
    q, cfg = load_checkpoint(tmp_path / "c.txt")
    assert cfg == {"dim": 3} and q.decoder == decoder
    for k in p.arrays:
        assert p.arrays[k].tobytes() == q.arrays[k].tobytes()
    save_checkpoint(tmp_path / "d.txt", q, {"dim": 3})
    assert (tmp_path / "c.txt").read_bytes() == (tmp_path / "d.txt").read_bytes()


def test_incompatible_shapes_listed():
    p = init_params(np.random.default_rng(0), 5, 4, 3)
    with pytest.raises(ShapeError) as exc:
        check_compatible(p, 5, 4, 8, 2, "distmult")
    msg = str(exc.value)
    assert "H_global: expected (9, 8), found (9, 3)" in msg


def test_corrupt_files(tmp_path):
    (tmp_path / "x.txt").write_text("hello\n")
    with pytest.raises(ParseError):
        load_checkpoint(tmp_path / "x.txt")
    p = init_params(np.random.default_rng(0), 2, 2, 2)
    save_checkpoint(tmp_path / "c.txt", p)
    lines = (tmp_path / "c.txt").read_text().splitlines()
    (tmp_path / "t.txt").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ParseError):
        load_checkpoint(tmp_path / "t.txt")
