"""
Collections, story groups, and similarity matrices
===================================================

Build a toy painting collection, save and reload its manifest, compute a
cosine similarity matrix from embedding vectors, and round-trip the matrix
through the on-disk MOSAIC-SIM format.
"""

import os
import tempfile

import numpy as np

from mosaic.dataset import group_memberships, load_manifest, save_manifest
from mosaic.similarity import load_similarity_matrix, save_similarity_matrix

from _toy import toy_collection, toy_matrix

collection = toy_collection()
print(f"collection: {len(collection)} paintings, {len(collection.groups)} story groups")
for group in collection.groups:
    print(f"  group {group.group_id} ({group.name}): {len(group.member_ids)} paintings")

# a painting knows its groups and vice versa
pid = collection.ids[0]
print(f"{pid} belongs to groups {sorted(group_memberships(collection, pid))}")

workdir = tempfile.mkdtemp(prefix="mosaic-demo-")
manifest_path = os.path.join(workdir, "manifest.json")
save_manifest(collection, manifest_path)
reloaded = load_manifest(manifest_path)
assert reloaded.paintings == collection.paintings
print(f"manifest round-trip OK ({manifest_path})")

# cosine similarity over the embedding vectors: symmetric, unit diagonal
matrix = toy_matrix(collection)
print(f"matrix: {matrix.m}x{matrix.m}, kind={matrix.kind}")
print(f"  diagonal all ones: {bool(np.all(np.diag(matrix.values) == 1.0))}")
print(f"  symmetric: {bool(np.array_equal(matrix.values, matrix.values.T))}")

matrix_path = os.path.join(workdir, "toy.sim")
save_similarity_matrix(matrix, matrix_path)
back = load_similarity_matrix(matrix_path, reloaded)
print(f"matrix file round-trip max error: {np.max(np.abs(back.values - matrix.values)):.2e}")
