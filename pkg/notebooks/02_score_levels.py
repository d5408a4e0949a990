# coding: utf-8

# # Why raw scores are mapped to levels
#
# The simulator grades each child 0-10. Averaging those raw grades lets one
# clearly good action disappear among weak siblings. Mapping them to a few
# level values first keeps it visible.

# In[1]:

from fractions import Fraction

from repro_mcts.tree import LevelConfig, level_constraint_holds, map_score


# Two sibling groups: one has a single strong child, the other is uniformly so-so.

# In[2]:

cfg = LevelConfig()
strong_one = (9, 1, 1)
so_so = (6, 6, 6)

raw_means = [Fraction(sum(g), len(g)) for g in (strong_one, so_so)]
mapped = [[map_score(r, cfg) for r in g] for g in (strong_one, so_so)]
mapped_means = [Fraction(sum(g), len(g)) for g in mapped]

print("raw means   ", raw_means)       # 11/3 vs 6: the so-so group wins
print("mapped      ", mapped)
print("mapped means", mapped_means)    # 7/3 vs 2: the strong child wins


# The ordering flips only when one high child plus k-1 low ones beats k mid ones.

# In[3]:

for high, mid, low in [(5, 2, 1), (3, 2, 1), (4, 2, 1)]:
    print((high, mid, low), "holds for k=3:", level_constraint_holds(high, mid, low, 3))


# For wider expansions the default high level is raised just enough.

# In[4]:

for k in range(1, 7):
    c = LevelConfig.for_k(k)
    print(k, (c.high, c.mid, c.low), level_constraint_holds(c.high, c.mid, c.low, k))
