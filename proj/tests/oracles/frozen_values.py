# Copyright 2026 The MARS Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Independent high-precision evaluation of the frozen expected values used
by the C++ unit tests. Run with `python3 frozen_values.py`; it prints every
value that is hard-coded in tests/*.cpp."""
import mpmath as mp

mp.mp.dps = 50


def law_p(A, am, al, b, E, rve, rllm, d):
    return A / (mp.mpf(rve) ** am * mp.mpf(rllm) ** al * mp.mpf(d) ** b) + E


def law_c(k, g, dl, E, r, d):
    return k * mp.mpf(r) ** g * mp.mpf(d) ** dl + E


def bisect(f, lo, hi, iters=400):
    flo = f(lo)
    for _ in range(iters):
        mid = (lo + hi) / 2
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return (lo + hi) / 2


print("predict_loss example:", mp.nstr(law_p(10, mp.mpf("0.1"), mp.mpf("0.2"), mp.mpf("0.3"), mp.mpf("1.5"), 8, 16, 1024), 20))
print("predict_convergence example:", mp.nstr(law_c(2000, mp.mpf("-0.4"), mp.mpf("0.55"), 100, 16, 2048), 20))

# balanced VE rank: t_ve(r) - t_llm(16) = 0 by bisection
t_llm = law_c(2000, mp.mpf("-0.4"), mp.mpf("0.55"), 100, 16, 2048)
r_star = bisect(lambda r: law_c(500, mp.mpf("-0.6"), mp.mpf("0.45"), 50, r, 2048) - t_llm, mp.mpf("1e-6"), mp.mpf("1e6"))
print("balanced r_ve example:", mp.nstr(r_star, 20))

# scenario S1
P = dict(A=12, am=mp.mpf("0.08"), al=mp.mpf("0.22"), b=mp.mpf("0.28"), E=mp.mpf("1.6"))
CV = dict(k=900, g=mp.mpf("-0.55"), dl=mp.mpf("0.5"), E=60)
CL = dict(k=2600, g=mp.mpf("-0.35"), dl=mp.mpf("0.55"), E=140)
lam = mp.mpf("0.3")


def s1_true(rve, rllm, d):
    tv = law_c(CV["k"], CV["g"], CV["dl"], CV["E"], rve, d)
    tl = law_c(CL["k"], CL["g"], CL["dl"], CL["E"], rllm, d)
    gap = abs(tv - tl) / max(tv, tl)
    return law_p(P["A"], P["am"], P["al"], P["b"], P["E"], rve, rllm, d) * (1 + lam * gap), tv, tl


grid = [8, 16, 32, 64]
for d in [8192]:
    rows = []
    for rl in grid:
        for rv in grid:
            L, tv, tl = s1_true(rv, rl, d)
            rows.append((L, rl, rv))
            print(f"S1 d={d} r_ve={rv} r_llm={rl} L={mp.nstr(L, 17)} t_ve={mp.nstr(tv, 12)} t_llm={mp.nstr(tl, 12)}")
    best = min(rows)
    print("S1 oracle best at", d, "-> (r_ve, r_llm) =", (best[2], best[1]), "L =", mp.nstr(best[0], 17))

# S1 balanced VE rank per r_llm at 8192 (continuous)
for rl in grid:
    tl = law_c(CL["k"], CL["g"], CL["dl"], CL["E"], rl, 8192)
    r = bisect(lambda r: law_c(CV["k"], CV["g"], CV["dl"], CV["E"], r, 8192) - tl, mp.mpf("1e-9"), mp.mpf("1e9"))
    print("S1 balanced r_ve for r_llm", rl, "=", mp.nstr(r, 15))

# MARS picks (1, 64) on S1: every balanced VE rank clamps to r_min = 1.
L, tv, tl = s1_true(1, 64, 8192)
print("S1 true perplexity at (1, 64):", mp.nstr(L, 17))

# select_best example: A=10, alpha_m=alpha_l=0.2, beta=0.3, E=1.5 on the diagonal
for r in grid:
    print(f"diag L({r},{r}) =", mp.nstr(law_p(10, mp.mpf("0.2"), mp.mpf("0.2"), mp.mpf("0.3"), mp.mpf("1.5"), r, r, 8192), 17))
