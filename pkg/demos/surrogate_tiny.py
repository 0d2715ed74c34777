"""Train a tiny surrogate on a single plate and compare its rollout with the tracer.

Runs in about a minute. The networks are far too small to be accurate, the
point is to show the dataset, training and rollout steps end to end.
"""

from cloudrt import metrics, scenegen
from cloudrt.surrogate import (MECH_DET, MECH_NON, SurrogateModel, build_training_set, rollout,
                               tiny_config, train)
from cloudrt.tracer import TraceConfig, trace

plate = scenegen.gen_plane([0.1, 0.0, 1.0], 2, size=4.0, seed=0)
links = [(0, tx, rx) for tx, rx in scenegen.plane_links(plate, 12, seed=0)]
cfg = TraceConfig(n_rays=10_000, max_bounces=1, n_scatter=1)
data = scenegen.gen_dataset([plate], links, cfg, seed=0, max_det_per_link=10,
                            max_non_det_per_link=10)
print("samples:", data.manifest.counts)

models = {}
for mech in (MECH_DET, MECH_NON):
    scfg = tiny_config(mech, lr=1e-3, epochs=30)
    res = train(build_training_set(data, scfg, mech), SurrogateModel(scfg))
    print(f"{mech}: loss {res.curve[0][3]:.4g} -> {res.curve[-1][3]:.4g}")
    models[mech] = res.model

_, tx, rx = links[0]
scene = plate.with_link(tx, rx)
ref = trace(scene, cfg)
pred = rollout(scene, models[MECH_DET], models[MECH_NON], cfg)
for name, real in (("tracer", ref), ("surrogate", pred)):
    print(f"{name:9s}: PL {metrics.path_loss(real):6.2f} dB  DS {metrics.rms_ds(real) * 1e9:5.2f} ns  "
          f"{len(real.nlos)} NLOS paths")
