#!/usr/bin/env python3
"""Builds the fixture corpus: stripped and unstripped twins, ground-truth
files, frozen reference dumps and a manifest.

Usage: build_fixtures.py [--out DIR]   (default: bin/ next to this script)
"""
import argparse
import json
import os
import re
import shutil
import subprocess
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
SRC = os.path.join(HERE, "src")

COMMON_C = ["-g0", "-fno-reorder-blocks-and-partition", "-nostartfiles", "-Wl,--build-id=none", "-ffile-prefix-map=" + HERE + "=."]
ASM = ["-nostdlib", "-static", "-no-pie", "-Wl,--build-id=none"]

# (fixture, variant, opt, kind, sources, extra flags)
FIXTURES = [
    ("plain", "O2", "O2", "c", ["plain.c"], []),
    ("plain", "O3", "O3", "c", ["plain.c"], []),
    ("plain", "Os", "Os", "c", ["plain.c"], []),
    ("switch", "pie", "O2", "c", ["switch.c"], ["-fpie", "-pie"]),
    ("switch", "nopie", "O2", "c", ["switch.c"], ["-fno-pic", "-no-pie"]),
    ("noreturn", "O2", "O2", "c", ["noreturn.c"], []),
    ("errorcall", "O2", "O2", "c", ["errorcall.c"], []),
    ("tailcall", "O2", "O2", "c", ["tailcall.c"], []),
    ("split", "asm", "asm", "asm", ["split.s"], []),
    ("split_rbp", "asm", "asm", "asm", ["split_rbp.s"], []),
    ("asm_direct", "asm", "asm", "asm", ["asm_direct.s"], []),
    ("asm_ptr", "asm", "asm", "asm", ["asm_ptr.s"], []),
    ("misaligned_fde", "asm", "asm", "asm", ["misaligned_fde.s"], []),
    ("alias_jt", "asm", "asm", "asm", ["alias_jt.s"], []),
]


def run(cmd, **kw):
    return subprocess.run(cmd, check=True, capture_output=True, text=True, **kw).stdout


def tool(name):
    path = shutil.which(name)
    if not path:
        raise FileNotFoundError(name)
    return path


def exec_ranges(binary):
    out = []
    for line in run([tool("readelf"), "-SW", binary]).splitlines():
        m = re.match(r"\s*\[\s*\d+\]\s+(\S+)\s+\S+\s+([0-9a-f]+)\s+[0-9a-f]+\s+([0-9a-f]+)\s+\S+\s+(\S*)", line)
        if m and "X" in m.group(4):
            lo = int(m.group(2), 16)
            out.append((lo, lo + int(m.group(3), 16)))
    return out


def truth_from_symbols(unstripped):
    """FUNC symbols with nonzero size in executable code, minus split-off
    .cold fragments (they are pieces of another function)."""
    ranges = exec_ranges(unstripped)
    starts = set()
    for line in run([tool("readelf"), "-sW", unstripped]).splitlines():
        parts = line.split()
        if len(parts) < 8 or parts[3] != "FUNC" or parts[6] == "UND":
            continue
        addr, size, name = int(parts[1], 16), int(parts[2]), parts[7]
        if size == 0 or ".cold" in name:
            continue
        if any(lo <= addr < hi for lo, hi in ranges):
            starts.add(addr)
    return sorted(starts)


def error_sites(unstripped):
    """Calls to error@plt with the status argument set up before them."""
    sites = []
    last_edi = None
    for line in run([tool("objdump"), "-d", "--no-show-raw-insn", unstripped]).splitlines():
        m = re.match(r"\s*([0-9a-f]+):\s+(.*)$", line)
        if not m:
            if line.endswith(">:"):
                last_edi = None
            continue
        addr, ins = int(m.group(1), 16), m.group(2).strip()
        if re.match(r"xor\s+%edi,%edi", ins):
            last_edi = 0
        elif mm := re.match(r"mov\s+\$0x([0-9a-f]+),%edi", ins):
            last_edi = int(mm.group(1), 16)
        elif re.search(r"%edi$|%rdi$", ins) and not ins.startswith(("cmp", "test")):
            last_edi = None
        if re.match(r"call\s+[0-9a-f]+ <error@plt>", ins):
            sites.append({"site": hex(addr), "status": last_edi})
    return sites


def build_one(out, fixture, variant, opt, kind, sources, extra):
    stem = f"{fixture}-{variant}"
    unstripped = os.path.join(out, stem + ".unstripped")
    stripped = os.path.join(out, stem)
    srcs = [os.path.join(SRC, s) for s in sources]
    if kind == "c":
        cmd = [tool("gcc"), "-" + opt, *COMMON_C, *extra, *srcs, os.path.join(SRC, "start.c"), "-o", unstripped]
    else:
        cmd = [tool("gcc"), *ASM, *extra, *srcs, "-o", unstripped]
    run(cmd)
    run([tool("strip"), "--strip-all", "-o", stripped, unstripped])

    truth = os.path.join(out, stem + ".truth")
    with open(truth, "w") as f:
        f.write(f"# {stem}: FUNC symbols of the unstripped build\n")
        for a in truth_from_symbols(unstripped):
            f.write(f"{a:#x}\n")
    frames = os.path.join(out, stem + ".frames")
    with open(frames, "w") as f:
        f.write(run([tool("readelf"), "--debug-dump=frames-interp", stripped]))
    entry = {"fixture": fixture, "opt": opt, "variant": variant, "kind": kind,
             "stripped": os.path.basename(stripped), "unstripped": os.path.basename(unstripped),
             "truth": os.path.basename(truth), "frames": os.path.basename(frames)}
    if fixture == "errorcall":
        sites = os.path.join(out, stem + ".error_sites.json")
        with open(sites, "w") as f:
            json.dump(error_sites(unstripped), f, indent=2)
            f.write("\n")
        entry["error_sites"] = os.path.basename(sites)
    return entry


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(HERE, "bin"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    manifest = []
    for fx in FIXTURES:
        try:
            manifest.append(build_one(args.out, *fx))
        except (FileNotFoundError, subprocess.CalledProcessError) as e:
            detail = e.stderr if isinstance(e, subprocess.CalledProcessError) else f"missing tool {e}"
            manifest.append({"fixture": fx[0], "variant": fx[1], "opt": fx[2], "skipped": str(detail).strip()})
            print(f"skipped {fx[0]}-{fx[1]}: {detail}", file=sys.stderr)
    with open(os.path.join(args.out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
