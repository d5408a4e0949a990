# coding: utf-8

# # Selection probabilities
#
# Children of an expanded node are picked at random, with weights from a
# softmax over their UCB1 scores. This notebook looks at how the temperature
# shapes that distribution.

# In[1]:

import numpy as np

from repro_mcts.tree import SearchNode, SelectionPolicy, sample_index, softmax_probabilities, ucb_score


# Three children whose UCB scores are already known:

# In[2]:

ucbs = [2.0, 0.2, -1.4]
for tau in (0.001, 0.5, 1.8, 5.0):
    p = softmax_probabilities(ucbs, tau)
    print(f"tau={tau:<6} ->", np.round(p, 4))


# The default temperature (1.8) keeps about a third of the mass off the best child.
# As tau grows the choice approaches uniform; as it shrinks it becomes argmax.

# In[3]:

policy = SelectionPolicy()
node = SearchNode(0, visit_count=1, total_score=7 / 3)
print("UCB of a once-visited child with mean 7/3 under a parent with 2 visits:", ucb_score(node, 2, policy.exploration))


# Sampling uses a seeded PCG64 stream, so repeated runs agree draw for draw.

# In[4]:

def draws(seed, n=10):
    rng = SelectionPolicy(rng_seed=seed).make_rng()
    p = softmax_probabilities(ucbs, 1.8)
    return [sample_index(p, rng) for _ in range(n)]


print(draws(0))
print(draws(0))
print(draws(1))
