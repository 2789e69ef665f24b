#!/usr/bin/env python3
"""Price portfolio VaR before and after detector-guided cleanup.

One calibrated detector is reused across fresh contaminated panels drawn with
the same generating parameters. Each panel is priced five ways: the exact
parametric VaR from the generating model, then estimates from the clean
prices, the contaminated prices, and the contaminated prices imputed at the
true respectively the predicted anomaly stamps. The contaminated estimate
drifts from the truth; backward-fill imputation at predicted stamps recovers
most of the gap. A second pass compares the imputation methods themselves on
covariance error against the generating return covariance.
"""

import numpy as np

from panelscan import workflows

SEED = 0
N_RUNS = 20


def main():
    result = workflows.reference_run(workflows.PipelineConfig(seed=SEED))
    print(f"detector calibrated on seed {SEED}; "
          f"pricing {N_RUNS} fresh panels, alpha=0.99, one-step horizon")

    var = workflows.var_experiment(result, n_anom=4, n_runs=N_RUNS)
    print("\nportfolio VaR by price source (mean +- std over runs)")
    for tag in ("theo", "clean", "anom", "loc_true", "loc_pred"):
        print(f"  {tag:9s}  {var.mean[f'var_{tag}']:.6f} +- "
              f"{var.std[f'var_{tag}']:.6f}")
    print("\nrelative error against the exact parametric VaR")
    for tag in ("clean", "anom", "loc_true", "loc_pred"):
        print(f"  {tag:9s}  {var.mean[f'rel_err_{tag}']:.5f}")
    ratio = var.mean["rel_err_loc_pred"] / var.mean["rel_err_anom"]
    print(f"  predicted-stamp cleanup keeps {ratio:.0%} of the contaminated "
          f"error\n  (stamp recall {var.mean['stamp_recall']:.3f}, "
          f"{var.mean['n_pred']:.1f} stamps flagged vs "
          f"{var.mean['n_true']:.0f} injected)")

    imp = workflows.imputation_experiment(result, n_anom=4, n_runs=N_RUNS)
    print("\nimputation at the true stamps: error vs the clean series, "
          "covariance error vs the generating model")
    print("  method       value error  covariance error")
    rows = [("untouched", "anom"), ("backfill", "BF"),
            ("interpolate", "LI"), ("reconstruct", "PCA_RECON")]
    for label, tag in rows:
        print(f"  {label:11s}  {imp.mean[f'imp_err_{tag}']:.6f}     "
              f"{imp.mean[f'cov_err_{tag}']:.3e}")
    print(f"  clean baseline covariance error: "
          f"{imp.mean['cov_err_clean']:.3e}")


if __name__ == "__main__":
    main()
