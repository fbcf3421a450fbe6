"""Throughput of the compiled CRC kernel against the pure-Python fallback.

    python benchmarks/bench_crc.py [--size 292] [--repeat 2000]
"""
import argparse
import random
import timeit

from scadasim import _crc_fallback, crc


def bench(name, fn, data, repeat):
    seconds = min(timeit.repeat(lambda: fn(data), number=repeat, repeat=5))
    rate = len(data) * repeat / seconds / 1e6
    print(f"{name:28s} {seconds / repeat * 1e6:9.2f} us/call  {rate:8.2f} MB/s")
    return seconds


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=292, help="payload octets per call")
    parser.add_argument("--repeat", type=int, default=2000)
    args = parser.parse_args()
    data = random.Random(0).randbytes(args.size)
    print(f"active backend: {crc.BACKEND}")
    kernels = [("fallback", _crc_fallback)]
    try:
        from scadasim import _crc_core
        kernels.append(("compiled", _crc_core))
    except ImportError:
        print("compiled kernel not built; showing fallback only")
    times = {}
    for label, mod in kernels:
        times[label, "crc"] = bench(f"{label} crc_dnp", mod.crc_dnp, data, args.repeat)
        times[label, "blocks"] = bench(f"{label} add_block_crcs", mod.add_block_crcs, data, args.repeat)
    if len(kernels) == 2:
        for op in ("crc", "blocks"):
            print(f"speedup {op}: {times['fallback', op] / times['compiled', op]:.1f}x")


if __name__ == "__main__":
    main()
