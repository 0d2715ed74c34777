"""Trace a few links in Room-A and print path loss, delay spread and path counts."""

from cloudrt import metrics, scenegen
from cloudrt.tracer import desk_trace_config, trace

spec = scenegen.room_specs(0)[0]
scene = scenegen.gen_room(spec, seed=0)
print(f"{spec.name}: {len(scene.cloud)} points, {len(scene.edges)} edges")

cfg = desk_trace_config(n_rays=20_000)
for i, (tx, rx) in enumerate(scenegen.random_links(scene, 3, seed=1)):
    real = trace(scene.with_link(tx, rx), cfg)
    kinds = {}
    for p in real.nlos:
        kinds[p.kinds[0]] = kinds.get(p.kinds[0], 0) + 1
    print(f"link {i}: PL {metrics.path_loss(real):6.2f} dB  "
          f"DS {metrics.rms_ds(real) * 1e9:5.2f} ns  "
          f"LOS {'yes' if real.los else 'no'}  first hops {kinds}")
