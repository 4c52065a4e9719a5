"""PageRank and connected components over a consistent snapshot, taken
while a background thread keeps inserting edges.

Run: python demos/analytics_on_snapshot.py
"""
import threading
import time

from telgraph import Engine, EngineConfig
from telgraph.analytics import connected_components, pagerank, snapshot_view
from telgraph.bench.generate import dedupe, rmat
from telgraph.bench.loader import bulk_load

SCALE = 12

with Engine(config=EngineConfig(wal=False)) as eng:
    src, dst = dedupe(*rmat(SCALE, 8, seed=7))
    bulk_load(eng, 1 << SCALE, src, dst)
    print(f"loaded {len(src)} edges on {1 << SCALE} vertices")

    stop = threading.Event()

    def churn():
        k = 0
        while not stop.is_set():
            eng.run(lambda tx: tx.add_edge(k % 64, (k * 7919) % (1 << SCALE)))
            k += 1

    t = threading.Thread(target=churn)
    t.start()
    time.sleep(0.3)
    view = snapshot_view(eng)
    stop.set()
    t.join()

    print(f"snapshot at epoch {view.epoch} holds {len(view.indices)} edges")
    ranks = pagerank(view, iterations=30)
    top = sorted(ranks.items(), key=lambda kv: -kv[1])[:5]
    print("top pagerank:", [(v, round(r, 5)) for v, r in top])
    print("rank mass:", round(sum(ranks.values()), 12))
    comps = connected_components(view)
    sizes = {}
    for label in comps.values():
        sizes[label] = sizes.get(label, 0) + 1
    print("components:", len(sizes), "largest:", max(sizes.values()))
    print("edges now (after churn):", len(snapshot_view(eng).indices))
