#!/usr/bin/env python3
"""Verify every built-in candidate against its expected verdict.

Runs verify_candidate on each (problem, candidate) pair of the corpus with
scale-appropriate sampling defaults, prints one line per pair, and exits
nonzero if any verdict disagrees with the stored expectation.

    python3 scripts/run_corpus.py
    python3 scripts/run_corpus.py --h 0.01 --t-max 30 --json
"""

import argparse
import json
import sys

from tsvar import ClosedInterval, UnboundedRay, VerifyConfig, corpus, verify_candidate


def is_dense(ts):
    return any(isinstance(s, (ClosedInterval, UnboundedRay)) for s in ts.segments)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=None, help="sampling step override")
    ap.add_argument("--t-max", type=float, default=None, help="horizon override")
    ap.add_argument("--json", action="store_true", help="emit one JSON document")
    args = ap.parse_args(argv)

    rows = []
    failures = 0
    for named in corpus():
        dense = is_dense(named.problem.ts)
        h = args.h if args.h is not None else (1e-3 if dense else 1.0)
        t_max = args.t_max if args.t_max is not None else (20.0 if dense else 60.0)
        cfg = VerifyConfig(t_max=t_max, h=h)
        for cand in named.known_candidates:
            rep = verify_candidate(named.problem, cand.gen, cfg)
            ok = rep.verdict is cand.expected
            failures += 0 if ok else 1
            rows.append(
                {
                    "problem": named.id,
                    "candidate": cand.label,
                    "expected": cand.expected.value,
                    "verdict": rep.verdict.value,
                    "el_sup_norm": rep.el_sup_norm,
                    "transversality": rep.transversality.kind.value,
                    "flags": list(rep.flags),
                    "ok": ok,
                }
            )

    if args.json:
        print(json.dumps({"results": rows, "failures": failures}, indent=2))
    else:
        for r in rows:
            mark = "ok " if r["ok"] else "FAIL"
            print(
                f"{mark} {r['problem']:>6} / {r['candidate']:<13} "
                f"expected={r['expected']:<24} got={r['verdict']:<24} "
                f"el={r['el_sup_norm']:.2e} trans={r['transversality']}"
            )
            for fl in r["flags"]:
                print(f"      flag: {fl}")
        print(f"{len(rows) - failures}/{len(rows)} candidates match")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
