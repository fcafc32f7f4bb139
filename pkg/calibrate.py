"""Scratch calibration of benchmark training dynamics (not part of the package)."""
import time, sys
import numpy as np
import torch

torch.set_num_threads(1)

import accentor as ax
from accentor.model import ModelConfig
from accentor.training import TrainOptions
from accentor.converter import pretrain, finetune, convert, seq_to_seq_layout
from accentor.speaker import train_generative, generate
from accentor.corruption import CorruptionSpec
from accentor.synth import BenchmarkSpec, build_benchmark
from accentor.tokens import MASK, TokenSequence, lcsr, mean_lcsr
from accentor.model import nll_loss
from accentor.training import pad_layout_batch
from accentor.corruption import corrupt, make_rng

def log(*a):
    print(f"[{time.strftime('%H:%M:%S')}]", *a, flush=True)

spec = BenchmarkSpec()
bench = build_benchmark(spec)
vocab = ax.semantic_vocabulary(spec.semantic_regular)
cfg = ModelConfig(semantic_vocab=vocab, n_layers=2, n_heads=4, d_model=64, d_ff=256, context_len=384)
cspec = CorruptionSpec(mask_token=vocab.reserved[MASK], seed=11)

log("pretraining...")
t0 = time.time()
popts = TrainOptions(steps=2000, batch_size=16, lr=3e-3, warmup_steps=200, lr_decay=0.9995, seed=101, log_every=200)
train_corpus = bench.target_corpus[:1900]
held = bench.target_corpus[1900:]
model, prep = pretrain(train_corpus, cspec, cfg, popts)
log(f"pretrain {time.time()-t0:.0f}s curve={[(s, round(l,3)) for s,l in prep.loss_curve]}")

# held-out reconstruction loss
rows = []
for j, seq in enumerate(held[:64]):
    c = corrupt(seq, cspec, make_rng(cspec, 999, j))
    rows.append(seq_to_seq_layout(c.tokens, seq.tokens, cfg))
ids, tg, mk = pad_layout_batch(rows, cfg.eos_id)
model.eval()
with torch.no_grad():
    lg, _ = model(model.embed_tokens(ids))
    hl = float(nll_loss(lg, tg, mk))
log(f"held-out recon loss: {hl:.3f} vs step0 {prep.initial_loss:.3f} (need <= 50%)")

log("finetuning...")
t0 = time.time()
fopts = TrainOptions(steps=800, batch_size=16, lr=5e-4, warmup_steps=80, lr_decay=0.999, seed=202, log_every=100)
tuned, frep = finetune(model, bench.pairs, fopts)
log(f"finetune {time.time()-t0:.0f}s curve={[(s, round(l,3)) for s,l in frep.loss_curve]}")

log("converting holdout (n=40 for speed)...")
t0 = time.time()
rng = np.random.default_rng(303)
scores, src_scores = [], []
for p in bench.holdout_pairs[:40]:
    res = convert(tuned, p.source, k=2, n_candidates=5, selector="reference_lcsr",
                  reference=p.target, rng=rng)
    scores.append(lcsr(res.output, p.target) if len(res.output) else 0.0)
    src_scores.append(lcsr(p.source, p.target))
log(f"convert {time.time()-t0:.0f}s  converted LCSR={np.mean(scores):.3f}  source={np.mean(src_scores):.3f}")

log("scratch finetune (no pretrain arm)...")
t0 = time.time()
torch.manual_seed(404)
from accentor.model import TokenTransformer
fresh = TokenTransformer(cfg)
scratch, srep = finetune(fresh, bench.pairs, fopts)
rng = np.random.default_rng(303)
s_scores = []
for p in bench.holdout_pairs[:40]:
    res = convert(scratch, p.source, k=2, n_candidates=5, selector="reference_lcsr",
                  reference=p.target, rng=rng)
    s_scores.append(lcsr(res.output, p.target) if len(res.output) else 0.0)
log(f"scratch {time.time()-t0:.0f}s  no-pretrain LCSR={np.mean(s_scores):.3f} (final loss {srep.final_loss:.3f})")

log("training speaker...")
t0 = time.time()
scfg = ModelConfig(semantic_vocab=vocab, n_layers=2, n_heads=4, d_model=64, d_ff=256,
                   context_len=384, n_output_heads=spec.groups, acoustic_groups=spec.groups,
                   group_codebook=spec.codebook)
sopts = TrainOptions(steps=2500, batch_size=16, lr=3e-3, warmup_steps=200, lr_decay=0.9995, seed=505, log_every=250)
smodel, srep2 = train_generative(bench.speak_train[:1900], scfg, sopts)
log(f"speaker {time.time()-t0:.0f}s curve={[(s, round(l,3)) for s,l in srep2.loss_curve]}")

# teacher-forced per-head accuracy on held-out speak examples
from accentor.speaker import speaking_layout
accs = []
with torch.no_grad():
    for ex in bench.speak_train[1900:1964]:
        sem, frames, tgt, mk = speaking_layout(ex, scfg)
        emb = smodel.embed_mixed(torch.from_numpy(sem).unsqueeze(0), torch.from_numpy(frames).unsqueeze(0))
        lg, _ = smodel(emb)
        pred = lg[0].argmax(-1).numpy()
        m = mk.astype(bool)
        accs.append((pred[m] == tgt[m]).mean())
log(f"teacher-forced per-head acc: {np.mean(accs):.4f}")

log("free-running generation on speak holdout...")
t0 = time.time()
style_ok, rec = [], []
rng = np.random.default_rng(606)
for item in bench.speak_holdout:
    res = generate(smodel, item.semantic, item.prompt, k=10, rng=rng)
    dec = bench.codec.decode(res.acoustic)
    style_ok.append(dec.style_purity(item.style))
    tail = TokenSequence(item.semantic.utt_id, item.semantic.tokens[item.prompt_tokens:])
    rec.append(lcsr(dec.tokens, tail) if len(dec.tokens) else 0.0)
log(f"speak {time.time()-t0:.0f}s  style purity={np.mean(style_ok):.3f}  recovered LCSR={np.mean(rec):.3f}")
log("DONE")
