"""Smoke test for the random_anc extension module.

Build and install the module first:

    cd crates/python && maturin build --release -o dist && pip install dist/*.whl

then run ``python3 python/smoke_test.py``.
"""

import os
import random
import sys
import tempfile

import random_anc as ra


def check(cond, what):
    if not cond:
        print(f"FAIL: {what}")
        sys.exit(1)
    print(f"ok: {what}")


def main():
    pool = ra.KeyPool(8, 5)
    check(len(pool) == 70, "pool of 70 keys")
    check({"0F", "17", "1B", "1D"} <= set(pool.keys()), "reference keys present")
    check(ra.psl("0F") == 3 and ra.psl("AA") == 4, "sidelobe of 0x0F and 0xAA")
    check(len(ra.KeyPool.from_text(pool.to_text())) == 70, "pool text round trip")

    bits = ra.quantize([ra.dequantize([False, False, True, False], 4)[0]], 4)
    check(bits == [False, False, True, False], "q=2 with 4 bits is 0010")

    model, reports = ra.train(pool, proj=8, seed=1, realizations=10)
    check(model is not None and model.converged, f"converged after {len(reports)} realization(s)")
    check(model.bit_recovery_accuracy(pool) == 1.0, "Bob recovers every bit")
    eve = model.eve_accuracy(pool)
    check(0.0 <= eve <= 1.0, f"Eve accuracy {eve:.3f}")

    rows, mean = model.uniqueness(pool)
    check(len(rows) == 256, f"uniqueness rows, mean {mean:.2f}%")
    grid = model.crosstab(pool)
    cells = [c for row in grid for c in row]
    check(len(cells) == 16, f"cross-tab {grid}")

    rng = random.Random(0)
    data = bytes(rng.randrange(256) for _ in range(500))
    cipher = model.encrypt(pool, "1B", data)
    check(len(cipher) == len(data), "zero overhead")
    check(model.decrypt(pool, "1B", cipher) == data, "round trip")
    check(model.encrypt(pool, "1B", b"") == b"", "empty input")

    try:
        model.encrypt(pool, "FF", data)
    except ra.AncException:
        check(True, "unknown key rejected")
    else:
        check(False, "unknown key rejected")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.ranc")
        model.deployment().save(path)
        loaded = ra.Model.load(path)
        check(not loaded.has_eve, "deployment bundle drops Eve")
        check(loaded.to_bytes() == model.deployment().to_bytes(), "serialization byte-exact")
        check(loaded.decrypt(pool, "1B", cipher) == data, "loaded model decrypts")

    rows = model.bench(pool, "0F", sizes=[16, 64], repetitions=3)
    check(
        all(abs(r["throughput"] - r["message_bytes"] / (r["t_alice"] + r["t_bob"])) < 1e-6 * r["throughput"] for r in rows),
        "throughput identity",
    )
    print("smoke test passed")


if __name__ == "__main__":
    main()
