"""Smoke test for the Python bindings.

Build and install first:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/hetqrng-*.whl
"""

import math
import os
import random
import tempfile

import hetqrng


def main():
    h = hetqrng.quantum_bound_discrete(14.05e-3, 14.14e-3)
    assert abs(h - 13.949) < 1e-3, h
    assert abs(hetqrng.quantum_bound_discrete(1.0, 1.0) - math.log2(math.pi)) < 1e-12

    cert = hetqrng.EntropyCertificate(14.05e-3, 14.14e-3, 1.25e9, var_q=0.5677, var_p=0.5677)
    assert abs(cert.secure_rate / 1e9 - 17.44) < 0.03
    back = hetqrng.EntropyCertificate.from_text(cert.to_text())
    assert back.h_quantum_bound == cert.h_quantum_bound

    try:
        hetqrng.quantum_bound_discrete(0.0, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("zero bin size accepted")

    r = hetqrng.autocorrelation([math.cos(0.3 * t) for t in range(100_000)], 5)
    assert all(abs(v - math.cos(0.3 * k)) < 1e-3 for k, v in enumerate(r))

    seed = "5a" * 32
    data = bytes(random.Random(1).getrandbits(8) for _ in range(4096))
    a = hetqrng.toeplitz_hash(data, 1000, seed)
    b = hetqrng.toeplitz_hash(data, 1000, seed, backend="fft")
    assert a == b and len(a) == 125

    results = hetqrng.run_battery(os.urandom(125_000))
    assert len(results) == 8
    assert not any(t.passed for t in hetqrng.run_battery(bytes(125_000)))

    cfg = hetqrng.Config()
    cfg.set("run.raw_samples", "1048576")
    cfg.set("test.bits", "1000000")
    assert cfg.get("run.raw_samples") == "1048576"
    with tempfile.TemporaryDirectory() as d:
        report = hetqrng.Pipeline(cfg).run(d)
        assert report["certificate.h_quantum_bound"] == "13.949"
        assert os.path.exists(os.path.join(d, "extracted.bin"))
        print("run status:", report["status"], "ratio:", report["extraction.ratio"])

    print("smoke test passed")


if __name__ == "__main__":
    main()
