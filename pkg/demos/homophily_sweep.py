"""Why aggregation helps at both ends of the homophily axis.

A two-layer graph convolution averages each node with its neighborhood.
When neighbors mostly share the node's class (homophily near 1) that
average sharpens the class signal; when neighbors are mostly the other
class (homophily near 0) the average is anti-correlated with the node's
own class, which a linear layer can exploit just as well.  The hard case
is the middle: at edge homophily 0.5 the neighborhood carries no label
information and averaging only burns signal.

This sweep trains a plain two-layer GCN on the synthetic benchmark at
several homophily levels and prints the resulting accuracy curve.

Run:  python demos/homophily_sweep.py
"""

from adgnn.drivers import ExperimentSpec, execute

spec = ExperimentSpec(
    kind="sweep_homophily",
    parameters={"grid": [0.0, 0.25, 0.5, 0.75, 1.0]},
    seeds=(0, 1, 2),
)
header, rows = execute(spec)

print("edge homophily vs test accuracy (plain 2-layer GCN, 3 seeds)")
print()
width = 46
floor = 0.45
for h, mean, std in rows:
    bar = "#" * int((mean - floor) / (1.0 - floor) * width)
    print(f"  h = {h:4.2f}   {mean:.4f} +- {std:.4f}  {bar}")
print()
print("both extremes are easy, the uninformative midpoint is not; the "
      "same\nU-shape appears throughout the synthetic experiments and is "
      "the reason\nper-node aggregation decisions depend on local label "
      "agreement, not on\nhomophily being high.")
