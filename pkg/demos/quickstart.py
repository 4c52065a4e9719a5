"""A tiny social graph: create vertices, link them, read them back.

Run: python demos/quickstart.py
"""
from telgraph import Engine, EngineConfig

KNOWS, FOLLOWS = 0, 1

with Engine(config=EngineConfig(wal=False)) as eng:
    with eng.begin() as tx:
        alice = tx.create_vertex(b"alice")
        bob = tx.create_vertex(b"bob")
        carol = tx.create_vertex(b"carol")
        tx.add_edge(alice, bob, b"since 2019", label=KNOWS)
        tx.add_edge(alice, carol, b"since 2021", label=KNOWS)
        tx.add_edge(bob, alice, label=FOLLOWS)

    with eng.begin() as tx:
        # add_edge on an existing edge replaces its properties
        tx.add_edge(alice, bob, b"best friends", label=KNOWS)
        tx.delete_edge(alice, carol, label=KNOWS)

    with eng.begin(read_only=True) as tx:
        print("alice is", tx.get_vertex(alice))
        print("alice knows", list(tx.scan_edges(alice, KNOWS)))
        print("bob follows", list(tx.scan_edges(bob, FOLLOWS)))
        print("labels on alice:", tx.labels(alice), "degree:", tx.degree(alice, KNOWS))

    print("committed epoch:", eng.gre)
