#!/usr/bin/env python3
"""Emit include/apx/detail/sobol_joe_kuo.hpp from scipy's Joe-Kuo tables.

The emitted header carries primitive polynomials and initial direction
numbers for the first 64 Sobol dimensions. Run from the repo root:

    python3 tools/gen_sobol_table.py > include/apx/detail/sobol_joe_kuo.hpp
"""
import os
import sys

import numpy as np
import scipy.stats


MAX_DIM = 64
MAX_DEG = 18


def main():
    npz = np.load(os.path.join(os.path.dirname(scipy.stats.__file__),
                               "_sobol_direction_numbers.npz"))
    poly, vinit = npz["poly"], npz["vinit"]

    out = sys.stdout
    out.write("#pragma once\n\n")
    out.write("// Joe-Kuo primitive polynomials and initial direction numbers\n")
    out.write("// for Sobol dimensions 1..64. Generated by tools/gen_sobol_table.py;\n")
    out.write("// do not edit by hand.\n\n")
    out.write("#include <cstdint>\n\n")
    out.write("namespace apx::detail {\n\n")
    out.write(f"inline constexpr int kSobolMaxDim = {MAX_DIM};\n")
    out.write(f"inline constexpr int kSobolMaxDeg = {MAX_DEG};\n\n")

    # Row j of the npz tables belongs to 0-based dimension j. Row 0 is a
    # placeholder: the first dimension has no polynomial (all m_i = 1) and
    # is special-cased by the generator, so emit 0 there.
    polys = [0] + [int(poly[i]) for i in range(1, MAX_DIM)]
    out.write("inline constexpr std::uint32_t kSobolPoly[kSobolMaxDim] = {\n")
    for i in range(0, MAX_DIM, 8):
        out.write("    " + ", ".join(str(p) for p in polys[i:i + 8]) + ",\n")
    out.write("};\n\n")

    out.write("inline constexpr std::uint32_t kSobolVinit[kSobolMaxDim][kSobolMaxDeg] = {\n")
    for d in range(MAX_DIM):
        if d == 0:
            row = [0] * MAX_DEG
        else:
            row = [int(x) for x in vinit[d]]
        out.write("    {" + ", ".join(str(v) for v in row) + "},\n")
    out.write("};\n\n")
    out.write("}  // namespace apx::detail\n")


if __name__ == "__main__":
    main()
