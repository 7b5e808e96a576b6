"""
Meronym-driven super-categories
===============================

Categories that share part names cluster into super-categories; each
cluster is served by one expert branch. New categories join the branch
they share the most parts with.
"""

from sketchparts.taxonomy import assign_new_category, cluster_supercategories, load_taxonomy

part_sets = {
    "flying bird": {"head", "body", "wing", "tail"},
    "airplane": {"body", "wing", "tail"},
    "cow": {"head", "body", "leg", "tail", "horn", "udder"},
    "horse": {"head", "body", "leg", "tail"},
    "car": {"body", "wheel", "window"},
    "bus": {"body", "wheel", "window", "door"},
}

for k in (6, 4, 3):
    print(f"K={k}:", cluster_supercategories(part_sets, k))

# the grouping that the rest of the demos use, written in taxonomy text
text = """
super Large Animals
cat cow : head, body, leg, tail, horn, udder
cat horse : head, body, leg, tail
super Four Wheelers
cat car : body, wheel, window
cat bus : body, wheel, window, door
super Flying Things
cat airplane : body, wing, tail
cat flying bird : head, body, wing, tail
"""
tax = load_taxonomy(text)
print("branches:", tax.branch_names)
for b, name in enumerate(tax.branch_names):
    print(f"  {name}: {tax.n_parts(b)} parts ->", tax.part_ids[b])

# an elephant-ish part set lands with the large animals
print("elephant goes to:", assign_new_category(tax, {"head", "body", "leg", "tail", "trunk"}))
