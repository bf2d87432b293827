"""How often noise-free PB-PJ counts pin down the transmitted codeword set.

A random partial-band attacker adds one count on some subcarriers.  When more
than one choice of K user codewords explains the counts, no decoder can tell
them apart, so exact recovery is capped by the identifiable fraction.  Longer
codes (higher weight n) leave fewer alternative explanations.
"""
from __future__ import annotations

import argparse

import numpy as np

from sapcode import phy_sim
from sapcode.qln_decoder import consistent_hypotheses, decode_features, ideal_features
from sapcode.superimposed_code import CodeParams, construct_codebook

CODES = [(5, 2, 3), (7, 2, 6), (11, 2, 10)]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=3)
    ap.add_argument("--instances", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    K = args.users
    print(f"{'code':>12} {'N_E':>5} {'identifiable':>13} {'recovered':>10} {'wrong':>6}")
    for q, k, Kd in CODES:
        if K > Kd:
            continue
        book = construct_codebook(CodeParams(q, k, Kd, K + 2))
        rng = np.random.default_rng(args.seed)
        ident = ok = wrong = 0
        for _ in range(args.instances):
            burst = phy_sim.draw_active_users(book, K, rng)
            a = phy_sim.draw_attack("PB-PJ", book.length, 1.0, rng).codeword
            f = ideal_features(book, burst.codewords, a)
            truth = tuple(sorted(burst.codewords))
            ident += consistent_hypotheses(book, f.m_I, K) == [truth]
            rep = decode_features(f, book, K).report
            ok += rep.ok and rep.codeword_indices == truth
            wrong += rep.ok and rep.codeword_indices != truth
        n = args.instances
        print(f"{str((q, k, Kd)):>12} {book.length:5d} {ident / n:13.4f} {ok / n:10.4f} {wrong:6d}")


if __name__ == "__main__":
    main()
