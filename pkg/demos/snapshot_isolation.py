"""Readers keep a stable snapshot while writers commit, and two writers
touching the same vertex cannot both win.

Run: python demos/snapshot_isolation.py
"""
from telgraph import Engine, EngineConfig, TransactionAborted

with Engine(config=EngineConfig(wal=False)) as eng:
    with eng.begin() as tx:
        hub = tx.create_vertex(b"hub")
        for d in range(3):
            tx.add_edge(hub, 100 + d)

    # each transaction runs on its own worker, as concurrent threads would
    reader = eng.worker().begin(read_only=True)
    before = [d for d, _ in reader.scan_edges(hub)]

    with eng.worker().begin() as writer:
        writer.add_edge(hub, 200)
        writer.delete_edge(hub, 100)

    again = [d for d, _ in reader.scan_edges(hub)]
    reader.commit()
    with eng.begin(read_only=True) as fresh:
        after = [d for d, _ in fresh.scan_edges(hub)]
    print("old reader, first scan :", before)
    print("old reader, second scan:", again, "(unchanged)")
    print("new reader             :", after)

    # write-write conflict: both start from the same snapshot
    first, second = eng.worker().begin(), eng.worker().begin()
    first.put_vertex(hub, b"renamed by first")
    first.commit()
    try:
        second.put_vertex(hub, b"renamed by second")
        second.commit()
    except TransactionAborted as exc:
        print("second writer aborted:", type(exc).__name__, exc)

    # Engine.run retries aborted attempts with a fresh snapshot
    eng.run(lambda tx: tx.put_vertex(hub, b"renamed by retry loop"))
    with eng.begin(read_only=True) as tx:
        print("hub is now", tx.get_vertex(hub))
