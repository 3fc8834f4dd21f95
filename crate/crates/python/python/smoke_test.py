"""Smoke test for the lockstep_sim extension module."""

import json

import lockstep_sim as ls


def main():
    assert ls.ecc_encode(0) == 0
    cw = ls.ecc_encode(0xDEADBEEF)
    assert ls.ecc_decode(cw) == (0xDEADBEEF, "clean", None)
    data, status, bit = ls.ecc_decode(cw ^ (1 << 3))
    assert (data, status, bit) == (0xDEADBEEF, "corrected", 3)
    assert ls.ecc_decode(cw ^ 0b11)[1] == "uncorrectable"

    names = [k["name"] for k in ls.kernel_catalog()]
    assert "matmul24" in names and "matmul24-par" in names

    single = ls.Simulator("matmul24", mode="lockstep").run()
    par = ls.Simulator("matmul24-par", mode="parallel").run()
    want = ls.expected_checksum(24)
    assert single["signature"] == want, single["signature"]
    assert par["signature"] == want
    speedup = single["region_cycles"] / par["region_cycles"]
    print(f"matmul24: single {single['region_cycles']} cycles, "
          f"parallel {par['region_cycles']} cycles, speedup {speedup:.2f}")

    sim = ls.Simulator("hello", trace=True)
    r = sim.run(10_000)
    assert r["status"] == "exited" and sim.uart == r["uart"]
    assert len(sim.trace_lines()) == r["instret"][0]

    # A register upset in one lockstep core is outvoted.
    sim = ls.Simulator("matmul8")
    sim.step(2000)
    sim.inject("core:1:x15:7@0")
    r = sim.run()
    assert r["signature"] == ls.expected_checksum(8)

    image = ls.assemble("_start:\n    addi x1, x0, 5\n")
    assert image == bytes.fromhex("93005000")

    spec = {
        "schema_version": ls.SCHEMA_VERSION,
        "kernel": "matmul3",
        "mode": "lockstep",
        "seed": 1,
        "plan": {"kind": "random", "runs": 10},
    }
    report = ls.run_campaign(json.dumps(spec), jobs=2)
    assert report["runs"] == 10
    assert report["outcomes"]["silent_data_corruption"] == 0
    print("campaign outcomes:", report["outcomes"])
    print("ok")


if __name__ == "__main__":
    main()
