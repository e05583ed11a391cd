import numpy as np
import pytest

from gridcan.codec import sample_codec
from gridcan.kernels import FreqDist
from gridcan.manifolds import make_field, make_manifold
from gridcan.net import Codebook
from gridcan.netbuild import build_auto, build_hetero, sample_sign, superpose


@pytest.fixture(scope="session")
def line_setup():
    """Full-size line attractor with a calibrated integration term.

    Shared by the netbuild/net unit tests and acceptance criterion 7;
    building it once keeps the suite runtime sane.
    """
    n, block, wma, c = 4096, 8, 32.0, 0.012
    dist = FreqDist.rectangular(wma)
    codec = sample_codec(n, block, dist, "permutation", seed=11)
    line = make_manifold("line", 1.0 / (10 * wma), length=1.0)
    make_field(line, "constant", name="fwd", components=[1.0])
    auto = build_auto(codec, line)
    sign = sample_sign(n, block, seed=21)
    het = build_hetero(codec, line, "fwd", sign, c=c, auto=auto)
    weights = superpose([auto, het])
    book = Codebook.from_codec(codec, np.linspace(0.0, 1.0, 4097))
    return {
        "n": n, "block": block, "omega_ma": wma, "speed": c,
        "codec": codec, "line": line, "auto": auto, "sign": sign,
        "hetero": het, "weights": weights, "codebook": book,
    }


@pytest.fixture(scope="session")
def small_line_setup():
    """Cheap line attractor for structural tests."""
    n, block, wma = 1024, 8, 16.0
    dist = FreqDist.gaussian(wma)
    codec = sample_codec(n, block, dist, "permutation", seed=3)
    line = make_manifold("line", 1.0 / (10 * wma), length=1.0)
    auto = build_auto(codec, line)
    book = Codebook.from_codec(codec, np.linspace(0.0, 1.0, 2049))
    return {"n": n, "block": block, "omega_ma": wma, "codec": codec,
            "line": line, "auto": auto, "codebook": book}
