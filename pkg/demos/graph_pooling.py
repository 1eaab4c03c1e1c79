"""
Attention pooling over a scene graph
====================================

Every object becomes a node with a box position, a box extent and a text
embedding.  The goal text is embedded the same way and the graph is pooled
with softmax(cosine / tau) weights, so nodes whose labels match the goal
dominate the summary vector handed to the policy.
"""

import numpy as np

from sgnav.graph import encode_graph, graph_noise, ground_truth_graph, pooling_weights, pseudo_embed
from sgnav.scenes import Family, scene_variants

scene = scene_variants(Family.TWO_WALL)[0].with_target(1)
dim = 32
graph = ground_truth_graph(scene, dim)
query = pseudo_embed(scene.target.goal_text, dim, scene.synonyms)
print("goal text:", scene.target.goal_text)

# Synonyms map the full command onto the bare object label, so the bowl node
# matches perfectly while walls and tables sit near zero cosine similarity.
for tau in (1.0, 0.1, 0.01):
    w = pooling_weights(graph, query, tau)
    print(f"tau={tau:<5}", "  ".join(f"{n.label}:{wi:.3f}" for n, wi in zip(graph.nodes, w)))

# %%
# With tau = 0.1 the pooled position is essentially the bowl's.
pooled = encode_graph(graph, query, 0.1)
print("pooled position", np.round(pooled[:3], 3), "target", scene.target.position)

# %%
# A perceived graph is noisier: positions jitter and non-target nodes drop out.
rng = np.random.default_rng(0)
for _ in range(3):
    noisy = graph_noise(graph, rng, 0.05, 0.2)
    print(len(noisy), "nodes, pooled position", np.round(encode_graph(noisy, query, 0.1)[:3], 3))
