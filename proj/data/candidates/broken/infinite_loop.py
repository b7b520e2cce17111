def generate_mask(state: dict, num_nodes: int, instance: dict) -> list:
    while True:
        pass
