# %% [markdown]
# # Why factorise: the covariate term swamps the rest
#
# A joint generator spends its capacity on all columns at once. As the
# covariate count grows, the covariate error dominates the total and the
# treatment and outcome conditionals get a shrinking share of attention.
# The closed-form ratio below makes that concrete.

# %%
from steamgen.benchmark import THEOREM1_PARAMS, BenchConfig, lookup, run_sweep, summarize
from steamgen.simulate import theorem1_ratio

for d in (1, 10, 100, 1000, 10_000):
    r = theorem1_ratio(d, THEOREM1_PARAMS)
    print(f"d={d:>6}  ratio={r.ratio:.5f}  |ratio-1| <= {r.bound:.5f}")

# %% [markdown]
# Two models with very different conditionals look almost identical to a
# joint divergence once d is large. Now the empirical version: a short
# dimensionality sweep with three repeats (the acceptance run uses ten).

# %%
summ = summarize(run_sweep("dimensionality", seed=0, bench=BenchConfig(repeats=3, n=1000),
                           values=(5, 20)))
for metric in ("jsd_pi", "u_pehe"):
    st, jt = lookup(summ, "steam", metric), lookup(summ, "joint", metric)
    for d in sorted(st):
        print(f"{metric:7s} d={d:<3.0f} staged {st[d].mean:.3f} +/- {st[d].half_width:.3f}"
              f"   joint {jt[d].mean:.3f} +/- {jt[d].half_width:.3f}")
