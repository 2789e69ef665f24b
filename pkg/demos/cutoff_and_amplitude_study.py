#!/usr/bin/env python3
"""Probe how the learned cut-off behaves when shocked and where detection fades.

Two studies on one calibrated run. First the cut-off s is shifted by gamma
across nine orders of magnitude and the test identification metrics are
retabulated: tiny shifts should not matter, while gamma = -2 saturates recall
at the cost of precision collapsing to the contamination rate. Second, the
contaminated test rows are bucketed by the injected shock amplitude
|contaminated/clean - 1| into quartiles, exposing the detection ratio's
dependence on how hard the anomaly actually hits the series.
"""

import numpy as np

from panelscan import evaluation, workflows

SEED = 0


def main():
    result = workflows.reference_run(workflows.PipelineConfig(seed=SEED))
    panel = result.data.test
    print(f"calibrated on seed {SEED}: cut-off s = {result.model.net.cutoff:.4f}, "
          f"test rows {panel.n_rows} ({int(panel.ident_labels.sum())} contaminated)")

    print("\ncut-off shock sweep on the test split")
    print("  gamma      accuracy  precision  recall    F1")
    table = evaluation.cutoff_robustness(result.model, panel.windows,
                                         panel.ident_labels)
    base = dict(table)[0.0].accuracy
    for gamma, m in table:
        marker = "  <- unshocked" if gamma == 0 else (
            f"  (acc shift {m.accuracy - base:+.4f})" if abs(gamma) <= 1e-2 else "")
        print(f"  {gamma:9.4g}  {m.accuracy:.4f}    {m.precision:.4f}     "
              f"{m.recall:.4f}    {m.f1:.4f}{marker}")
    print(f"  positive rate {float(np.mean(panel.ident_labels)):.4f} "
          "(precision converges here as gamma drives every score above s)")

    print("\ndetection ratio by injected amplitude quartile (test rows)")
    amplitudes, ident_correct, loc_correct = workflows.amplitude_records(
        result.model, result.data)
    print("  bucket  amplitude range        rows  identified  localized")
    loc_buckets = evaluation.amplitude_sensitivity(amplitudes, loc_correct)
    for i, (b, lb) in enumerate(zip(
            evaluation.amplitude_sensitivity(amplitudes, ident_correct),
            loc_buckets), start=1):
        print(f"  {i}       [{b.low:.5f}, {b.high:.5f}]   {b.count:4d}  "
              f"{b.ratio:10.4f}  {lb.ratio:9.4f}")
    print("  shocks drawn as |delta| ~ U[0, rho]: the lowest quartile contains "
          "near-zero amplitudes\n  that vanish into the diffusion noise, so its "
          "ratio tracks the false-positive rate.")


if __name__ == "__main__":
    main()
