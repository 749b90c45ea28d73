"""Scratch probe for the ablation benchmark: times the four configs on one
seed and checks the orderings before acceptance settings get pinned.

usage: python3 tools/bench_probe.py [layers d max_len ft_epochs ft_batch tapt_epochs tapt_batch lr seed]
"""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from gem.corpus import GeneratorSpec, generate_synthetic_corpus, split
from gem.evaluation import evaluate_tasks
from gem.knowledge import load_bundled_lexicon
from gem.model import ModelConfig, build_variant
from gem.text import build_vocab
from gem.train import TrainConfig, mtl_finetune, task_adaptive_pretrain

args = sys.argv[1:]
LAYERS = int(args[0]) if len(args) > 0 else 1
D = int(args[1]) if len(args) > 1 else 32
MAX_LEN = int(args[2]) if len(args) > 2 else 32
EPOCHS = int(args[3]) if len(args) > 3 else 5
BATCH = int(args[4]) if len(args) > 4 else 96
TAPT_EPOCHS = int(args[5]) if len(args) > 5 else 1
TAPT_BATCH = int(args[6]) if len(args) > 6 else 64
LR = float(args[7]) if len(args) > 7 else 1e-3
SEED = int(args[8]) if len(args) > 8 else 0

t0 = time.time()
items = generate_synthetic_corpus(
    GeneratorSpec(n_items=2700, seed=100, interaction_mode=True)
)
sp = split(items, ratios=(2000 / 2700, 200 / 2700, 500 / 2700), seed=1)
slex = load_bundled_lexicon("symptom")
glex = load_bundled_lexicon("gender")
vocab = build_vocab([it.item.text for it in sp.train])
print(f"corpus {len(sp.train)}/{len(sp.dev)}/{len(sp.test)}, vocab {len(vocab)}, {time.time()-t0:.1f}s")

mc = ModelConfig(vocab_size=len(vocab), n_layers=LAYERS, d=D, n_heads=4,
                 d_ffn=2 * D, max_len=MAX_LEN, dropout_p=0.2)
tc = TrainConfig(epochs=EPOCHS, batch_size=BATCH, lr=LR, seed=SEED)
pc = TrainConfig(epochs=TAPT_EPOCHS, batch_size=TAPT_BATCH, lr=LR, seed=SEED)

results = {}
for name, variant, use_mask, tapt in (
    ("full", "gem", True, True),
    ("-attention", "concat_ablation", True, True),
    ("-entity_masking", "gem", False, True),
    ("-task_adaptation", "gem", True, False),
):
    run_slex = slex if use_mask else None
    run_glex = glex if use_mask else None
    cfg = ModelConfig(**{**mc.to_dict(), "variant": variant})
    model = build_variant(cfg, seed=SEED)
    t1 = time.time()
    if tapt:
        task_adaptive_pretrain(model, sp.train, vocab, pc, run_slex, run_glex)
    t2 = time.time()
    mtl_finetune(model, sp, run_slex, run_glex, vocab, tc)
    t3 = time.time()
    ev = evaluate_tasks(model, sp.test, vocab, run_slex, run_glex)
    results[name] = ev
    print(
        f"{name:<18} tapt {t2-t1:5.1f}s  ft {t3-t2:5.1f}s  "
        f"sy F1 {ev['symptom']['f1']:.4f}  gd F1 {ev['gender']['f1']:.4f}  "
        f"comb {ev['combined']['f1']:.4f}"
    )

full = results["full"]["combined"]["f1"]
print(f"\nfull - (-A)  = {full - results['-attention']['combined']['f1']:+.4f}")
print(f"full - (-EM) = {full - results['-entity_masking']['combined']['f1']:+.4f}")
print(f"full - (-TA) = {full - results['-task_adaptation']['combined']['f1']:+.4f}")
print(f"total {time.time()-t0:.1f}s")
