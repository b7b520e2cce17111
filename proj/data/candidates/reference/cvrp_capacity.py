def generate_mask(state: dict, num_nodes: int, instance: dict) -> list:
    depots = instance["depots"]
    nodes = instance["nodes"]
    visited = set(state["visited"])
    mask = [False] * num_nodes
    pending = False
    for i in range(depots, num_nodes):
        if i not in visited:
            pending = True
            mask[i] = nodes[i]["demand"] <= state["load"] + 1e-9
    # Close the route from a customer; never bounce between depots.
    if not state["at_depot"]:
        mask[state["origin_depot"]] = True
    elif not pending:
        mask[state["current"]] = True
    return mask
