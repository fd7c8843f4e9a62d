"""
From synthetic volumes to a localization track
==============================================

A scaled-down run of the whole pipeline, small enough to finish in a minute
or two on one core: generate volumes, run a short search over a narrowed
space, ensemble the best networks, and print the per-slice decisions.

With three training volumes per class the networks mostly learn volume
style rather than shape, so expect errors well above those of the full desk
run (``hpsearch gen`` + ``search`` + ``report``). Most slices of the track
stay undecided at the 0.7 cutoff.
"""

import tempfile

import numpy as np

from hpsearch import datagen
from hpsearch.ensemble import Ensemble, confusion, decide, runs
from hpsearch.optimizer import Ledger, SearchConfig, best_trials, run_search
from hpsearch.pipeline import CnnObjective, MemberCache, localization_track
from hpsearch.space import ParamSpace, default_space
from hpsearch.surrogate import GPConfig

ds = datagen.generate(datagen.GenConfig(volumes_per_class=(6, 6, 6, 6), slice_range=(6, 10)))
x, y, _ = ds.arrays("train")
print(f"{len(ds.volumes)} volumes, {len(x)} training slices, class weights {np.round(ds.class_weights, 3)}")

# a narrowed space keeps every trial to a few seconds
spec = default_space().to_dict()
narrow = {"b": [2, 3], "c": [1, 2], "r": [3, 4], "s": [3], "l": [-3, -2], "a": [2, 3], "e": [3, 5], "g": ["No"]}
for d in spec["dims"]:
    d["values"] = narrow[d["name"]]
space = ParamSpace.from_dict(spec)

# %%
# search: 6 random trials, then 6 surrogate-guided ones
objective = CnnObjective(ds, space)
ledger = Ledger()
cache = MemberCache(tempfile.mkdtemp(), ledger, k=3)
run_search(space, objective, SearchConfig(random_iters=6, adaptive_iters=6, gp=GPConfig(lml_restarts=1)),
           ledger, on_trial=cache)
for t in ledger:
    print(f"{t.id:2d} {t.stage:8s} {str(t.target_label):10s} {t.point}  loss {t.loss:.3f}  err {t.error_rate:.3f}")

# %%
# ensemble of the three best, evaluated on held-out volumes
members = [cache.load_or_train(t, objective, 0) for t in best_trials(ledger, 3)]
ens = Ensemble(members)
for level in ("slice", "volume"):
    cm = confusion(ens, ds, "test", level)
    print(f"{level} error {cm.error_rate:.3f}\n{cm.counts}")

# %%
# localization: one test volume per class, stacked in class order
images, truth = localization_track(ds)
decisions = decide(ens.predict_proba(images), cutoff=0.7)
print("truth    ", "".join(datagen.CLASS_NAMES[t] for t in truth))
print("decision ", "".join(datagen.CLASS_NAMES[d] if d is not None else "-" for d in decisions))
print("runs:", runs(decisions))
