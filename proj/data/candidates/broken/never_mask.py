def generate_mask(state: dict, num_nodes: int, instance: dict) -> list:
    return [True] * num_nodes
