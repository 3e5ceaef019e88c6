"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--docs 50000] [--repeat 20]

Both variants are called directly, so the env flag does not matter here.
"""

import argparse
import time

import numpy as np

from judgeloop import _kernels as k


def timed(fn, *args, repeat):
    fn(*args)  # warm-up, includes JIT compile for the numba side
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def postings(rng, n_docs, n_terms):
    indptr = np.zeros(n_terms + 1, dtype=np.int64)
    docs, tfs = [], []
    for t in range(n_terms):
        # Zipf-ish document frequencies
        df = max(1, int(n_docs * 0.3 / (t + 1)))
        d = np.sort(rng.choice(n_docs, size=df, replace=False))
        docs.append(d)
        tfs.append(rng.integers(1, 6, size=df).astype(np.float64))
        indptr[t + 1] = indptr[t] + df
    doc_len = rng.integers(20, 400, size=n_docs).astype(np.float64)
    idf = rng.uniform(0.1, 5.0, size=n_terms)
    return indptr, np.concatenate(docs), np.concatenate(tfs), idf, doc_len


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--docs", type=int, default=50_000)
    ap.add_argument("--terms", type=int, default=2_000)
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not k.HAVE_NUMBA:
        raise SystemExit("numba is not installed")

    rng = np.random.default_rng(0)
    indptr, post_doc, post_tf, idf, doc_len = postings(rng, args.docs, args.terms)
    query = np.array([0, 3, 17, 250, 1200], dtype=np.int64)
    bm25_args = (query, indptr, post_doc, post_tf, idf, doc_len, float(doc_len.mean()), 1.2, 0.75)

    rewards = rng.normal(size=args.steps)
    values = rng.normal(size=args.steps + 1)
    logp = rng.normal(-2, 1, size=args.steps)
    ref = rng.normal(-2, 1, size=args.steps)

    cases = [
        (f"bm25 ({args.docs} docs, 5 terms)", k.bm25_scores_numpy, k.bm25_scores_numba, bm25_args),
        (f"gae ({args.steps} steps)", k.gae_numpy, k.gae_numba, (rewards, values, 0.99, 0.95)),
        (f"low_var_kl ({args.steps} tokens)", k.low_var_kl_numpy, k.low_var_kl_numba, (logp, ref, 0.001)),
    ]
    print(f"{'kernel':<32}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, np_fn, nb_fn, fn_args in cases:
        a = np_fn(*fn_args)
        b = nb_fn(*fn_args)
        assert np.allclose(a, b, atol=1e-10), name
        t_np = timed(np_fn, *fn_args, repeat=args.repeat)
        t_nb = timed(nb_fn, *fn_args, repeat=args.repeat)
        print(f"{name:<32}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
