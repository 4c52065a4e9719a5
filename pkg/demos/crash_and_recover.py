"""Durable engine: commit, checkpoint, commit more, 'crash' by copying the
files without closing, then recover from the copy.

Run: python demos/crash_and_recover.py
"""
import os
import shutil
import tempfile

from telgraph import Engine
from telgraph.engine import CHECKPOINT_FILE, WAL_FILE
from telgraph.verify import engine_state, state_diff

root = tempfile.mkdtemp(prefix="telgraph-demo-")
live, crashed = os.path.join(root, "live"), os.path.join(root, "crashed")
eng = Engine.open(live)
with eng.begin() as tx:
    people = [tx.create_vertex(f"p{i}".encode()) for i in range(5)]
    for a, b in zip(people, people[1:]):
        tx.add_edge(a, b, b"next")
epoch = eng.checkpoint()
print("checkpoint at epoch", epoch)

for i in range(3):
    with eng.begin() as tx:
        tx.add_edge(people[-1], people[i], f"loop {i}".encode())
expected = engine_state(eng)

# simulate a crash: take the durable files as they are on disk right now
os.makedirs(crashed)
for name in (WAL_FILE, CHECKPOINT_FILE):
    shutil.copy(os.path.join(live, name), crashed)
eng.close()

with Engine.open(crashed) as back:
    print("recovered epoch", back.gre, "replayed", back.recovered_groups, "log groups")
    diff = state_diff(expected, engine_state(back))
    print("state matches:", not diff)
    with back.begin(read_only=True) as tx:
        print("last person links to", list(tx.scan_edges(people[-1])))
shutil.rmtree(root)
