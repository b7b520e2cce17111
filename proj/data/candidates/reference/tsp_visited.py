def generate_mask(state: dict, num_nodes: int, instance: dict) -> list:
    mask = [True] * num_nodes
    for node in state["visited"]:
        mask[node] = False
    mask[state["current"]] = False
    return mask
