import sys
import time

import numpy as np

sys.path.insert(0, "src")
from gem.corpus import CorpusSplit, GeneratorSpec, generate_synthetic_corpus, split
from gem.evaluation import evaluate_tasks
from gem.knowledge import load_bundled_lexicon
from gem.model import ModelConfig, build_variant
from gem.text import build_vocab
from gem.train import TrainConfig, mtl_finetune, task_adaptive_pretrain

items = generate_synthetic_corpus(GeneratorSpec(n_items=2700, seed=100, interaction_mode=True))
sp = split(items, ratios=(2000 / 2700, 200 / 2700, 500 / 2700), seed=1)
nodev = CorpusSplit(train=sp.train, dev=(), test=sp.test, ratios=sp.ratios)
slex, glex = load_bundled_lexicon("symptom"), load_bundled_lexicon("gender")
vocab = build_vocab([it.item.text for it in sp.train])
t0 = time.time()
configs = [("full", "gem", True), ("-A", "concat_ablation", True), ("-EM", "gem", False)]
if len(sys.argv) > 1 and sys.argv[1] == "all":
    configs.append(("-TA", "gem", True))
res = {name: [] for name, _, _ in configs}
for seed in range(5):
    for name, variant, mask in configs:
        slx = slex if mask else None
        glx = glex if mask else None
        mc = ModelConfig(vocab_size=len(vocab), n_layers=1, d=32, n_heads=4, d_ffn=64,
                         max_len=32, dropout_p=0.2, variant=variant)
        model = build_variant(mc, seed=seed)
        if name != "-TA":
            task_adaptive_pretrain(
                model, sp.train, vocab,
                TrainConfig(epochs=1, batch_size=96, lr=1e-4, seed=seed), slx, glx)
        mtl_finetune(model, nodev, slx, glx, vocab,
                     TrainConfig(epochs=10, batch_size=96, lr=2e-3, seed=seed))
        ev = evaluate_tasks(model, sp.test, vocab, slx, glx)
        res[name].append(ev["combined"]["f1"])
        print(f"seed {seed} {name:<4} sy={ev['symptom']['f1']:.4f} "
              f"gd={ev['gender']['f1']:.4f} comb={ev['combined']['f1']:.4f} "
              f"[{time.time()-t0:.0f}s]", flush=True)
m = {k: float(np.median(v)) for k, v in res.items()}
print("medians exact:", {k: repr(v) for k, v in m.items()})
print(f"full-(-A)={m['full']-m['-A']:+.6f}  full-(-EM)={m['full']-m['-EM']:+.6f}")
n = len(configs) * 5
print(f"{n} runs in {(time.time()-t0)/60:.1f} min -> 20 ~ {(time.time()-t0)/n*20/60:.1f} min")
