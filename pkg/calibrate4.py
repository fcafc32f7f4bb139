"""Calibration #3: order-2 language, substitution-only accent, aligned copy."""
import time
import numpy as np
import torch

torch.set_num_threads(1)

import accentor as ax
from accentor.model import ModelConfig, TokenTransformer
from accentor.training import TrainOptions, pad_layout_batch
from accentor.converter import pretrain, finetune, convert, seq_to_seq_layout
from accentor.corruption import CorruptionSpec
from accentor.synth import BenchmarkSpec, build_benchmark
from accentor.tokens import MASK, lcsr, mean_lcsr

def log(*a):
    print(f"[{time.strftime('%H:%M:%S')}]", *a, flush=True)

bench = build_benchmark(BenchmarkSpec())
log(f"TV={bench.corpus_stats['bigram_tv']:.4f} src-ref={mean_lcsr([(p.source, p.target) for p in bench.holdout_pairs]):.3f}")

vocab = ax.semantic_vocabulary(64)
cfg = ModelConfig(semantic_vocab=vocab, n_layers=2, n_heads=4, d_model=64, d_ff=384,
                  dropout=0.0, context_len=384)
cspec = CorruptionSpec(mask_token=vocab.reserved[MASK], seed=11)

log("pretrain 2000...")
t0 = time.time()
popts = TrainOptions(steps=2500, batch_size=16, lr=3e-3, warmup_steps=200, lr_decay=0.9990, seed=101, log_every=400)
model, prep = pretrain(bench.target_corpus[:1900], cspec, cfg, popts)
log(f"pretrain {time.time()-t0:.0f}s curve={[(s, round(l,3)) for s,l in prep.loss_curve]}")

def holdout_tf_acc(m, pairs):
    rows = [seq_to_seq_layout(p.source.tokens, p.target.tokens, cfg) for p in pairs]
    ids, tg, mk = pad_layout_batch(rows, cfg.eos_id)
    m.eval()
    with torch.no_grad():
        lg, _ = m(m.embed_tokens(ids))
        pred = lg.argmax(-1)
    msk = mk.numpy().astype(bool)
    return float((pred.numpy()[msk] == tg.numpy()[msk]).mean())

def eval_convert(m, pairs, tag, k=2, n=5):
    rng = np.random.default_rng(303)
    sc = []
    for p in pairs:
        res = convert(m, p.source, k=k, n_candidates=n, selector="reference_lcsr", reference=p.target, rng=rng)
        sc.append(lcsr(res.output, p.target) if len(res.output) else 0.0)
    log(f"{tag}: LCSR={np.mean(sc):.3f}")
    return float(np.mean(sc))

log("finetune 2500...")
t0 = time.time()
fopts = TrainOptions(steps=2500, batch_size=16, lr=1e-3, warmup_steps=100, lr_decay=0.9990, seed=202, log_every=500)
tuned, frep = finetune(model, bench.pairs, fopts)
log(f"finetune {time.time()-t0:.0f}s curve={[(s, round(l,3)) for s,l in frep.loss_curve]}")
log(f"tuned holdout tf-acc: {holdout_tf_acc(tuned, bench.holdout_pairs[:40]):.4f}")
eval_convert(tuned, bench.holdout_pairs[:40], "greedy", k=1, n=1)
eval_convert(tuned, bench.holdout_pairs[:40], "protocol k=2 n=5")

log("scratch arm 2500...")
t0 = time.time()
torch.manual_seed(404)
scratch, srep = finetune(TokenTransformer(cfg), bench.pairs, fopts)
log(f"scratch {time.time()-t0:.0f}s final={srep.final_loss:.3f} tf-acc={holdout_tf_acc(scratch, bench.holdout_pairs[:40]):.4f}")
eval_convert(scratch, bench.holdout_pairs[:40], "scratch protocol")
log("DONE")
