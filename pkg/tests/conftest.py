import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h=8, w=8):
    return rng.random((h, w, 3))


def random_int_disparity(rng, h=8, w=8, high=7):
    return rng.integers(0, high + 1, size=(h, w)).astype(np.float64)


def make_fixture_set(root, n, seed=0, h=12, w=20, flipped=True):
    """Write ``n`` left images plus raw inverse-depth maps under ``root`` and
    a ``samples.jsonl`` listing them with relative paths."""
    import json

    from pseudostereo.imagecore import write_image, write_pfm

    root.mkdir(parents=True, exist_ok=True)
    gen = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        write_image(gen.random((h, w, 3)), root / f"img{i}.png")
        # a near plane in front of a far background gives real occlusions
        depth = np.full((h, w), 0.2, np.float32)
        x0 = int(gen.integers(2, w - 8))
        depth[2:h - 2, x0:x0 + 6] = 1.0
        depth += gen.random((h, w)).astype(np.float32) * 0.01
        write_pfm(depth, root / f"img{i}.depth.pfm")
        entry = {"left": f"img{i}.png", "depth": f"img{i}.depth.pfm",
                 "dataset": "a" if i % 2 == 0 else "b"}
        if flipped:
            np.save(root / f"img{i}.flip.npy", depth[:, ::-1].astype(np.float64) * 1.5)
            entry["depth_flipped"] = f"img{i}.flip.npy"
        samples.append(entry)
    with open(root / "samples.jsonl", "w") as fh:
        for entry in samples:
            fh.write(json.dumps(entry) + "\n")
    return samples


# lines recorded by the acceptance checks
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
