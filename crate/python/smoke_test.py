"""Smoke test for the dreamlab Python extension.

Build and run from the repository root:

    cargo build --release -p dreamlab-py
    python3 python/smoke_test.py

The script copies target/release/libdreamlab.so to a temporary
dreamlab.so so that it can be imported without a wheel.
"""

import json
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_extension():
    for profile in ("release", "debug"):
        lib = os.path.join(ROOT, "target", profile, "libdreamlab.so")
        if os.path.exists(lib):
            break
    else:
        sys.exit("libdreamlab.so not found; run `cargo build --release -p dreamlab-py` first")
    tmp = tempfile.mkdtemp()
    shutil.copy(lib, os.path.join(tmp, "dreamlab.so"))
    sys.path.insert(0, tmp)
    import dreamlab

    return dreamlab


def main():
    dl = import_extension()

    rows = dl.sample_matrix(10, 0.3, seed=4)
    pi = dl.stationary_distribution(rows)
    assert abs(sum(pi) - 1.0) < 1e-12
    h = dl.entropy_rate(rows) / math.log(10)
    assert abs(h - 0.3) <= 0.01, h

    p = dl.softmax_with_temperature([1.0, 2.0, 3.0], 1000.0)
    assert max(p) - min(p) < 1e-2
    ent, kl = dl.loss_decomposition([0.5, 0.5], [0.75, 0.25])
    assert abs(kl - 0.14384) < 1e-5 and abs(ent - math.log(2)) < 1e-12

    tokens = dl.generate_markov(rows, 4000, seed=1)
    model = dl.Model(10, embed_dim=8, hidden_dim=16, n_layers=1, seed=3)
    config = {"bptt_len": 8, "batch_size": 8, "max_steps": 40, "dream_enabled": True, "sampling_temperature": 1.5}
    run = dl.train_run(model, tokens, json.dumps(config))
    assert len(run.standard_losses) == 40 and len(run.dream_losses) == 40
    assert run.trace_csv().startswith("step,phase,loss,corpus_pos\n")
    assert run.standard_losses[-1] < run.standard_losses[0]
    trained = run.model()
    assert trained.steps_trained == 80
    sample = trained.generate([0], 200, temperature=1.0, seed=5)
    assert len(sample) == 200 and all(0 <= t < 10 for t in sample)

    with tempfile.TemporaryDirectory() as d:
        stem = os.path.join(d, "m")
        trained.save(stem)
        again = dl.Model.load(stem)
        assert again.logits([1, 2, 3]) == trained.logits([1, 2, 3])

    assert dl.t_crit([1.0] * 200, 1.0) == 25
    est = dl.hurst_exponent([float(i) for i in range(4096)])
    assert est["exponent"] > 0.95
    heaps = dl.heaps_exponent(list(range(20000)))
    assert abs(heaps["exponent"] - 1.0) < 1e-9

    texts = os.path.join(ROOT, "data", "texts")
    files = [os.path.join(texts, f) for f in sorted(os.listdir(texts)) if f.endswith(".txt")]
    ids, vocab, cps = dl.build_corpus(files)
    assert len(cps) == len(files) - 1
    assert "".join(vocab[i] for i in ids[:11]) == "In Congress"

    print("dreamlab", dl.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
