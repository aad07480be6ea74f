"""A mesh with a hanging vertex, before and after edge segmentation.

The shipped stand-in mesh has one vertex sitting inside the edge of a
coarser neighbour.  Segmenting that edge makes the neighbour a polygon with
one more vertex, after which the scheme runs unchanged.

    python demos/hanging_nodes.py
"""
from wgfem.cases import initial_mesh, run_case
from wgfem.mesh import regularity_report, segment_hanging_edges

mesh = initial_mesh("case4")
for v, e, s in mesh.hanging_vertices():
    print(f"vertex {v} hangs on edge {e} at fraction {s:.3f}")
seg = segment_hanging_edges(mesh)
print("conforming after segmentation:", seg.is_conforming)
print("cell sizes:", sorted({len(c) for c in seg.cells}))
print(regularity_report(seg))
print()
print(run_case("4-hanging", levels=4).summary())
