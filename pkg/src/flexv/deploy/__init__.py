from .dma import DmaModel, pipeline_cycles
from .network import (NetLayer, NetworkError, NetworkSpec, ResolvedLayer, bundled_networks,
                      load_network, memory_footprint, network_schema, network_tensors,
                      parse_network, reference_network)
from .runner import LayerResult, NetworkResult, TileCache, run_layer_tiled, run_network
from .tiling import (DEFAULT_BUDGET, Tile, TilePlan, TilingError, aligned_cin, check_plan,
                     make_plan, solve_tiling, tile_bytes)

__all__ = [
    "DEFAULT_BUDGET", "DmaModel", "LayerResult", "NetLayer", "NetworkError", "NetworkResult",
    "NetworkSpec", "ResolvedLayer", "Tile", "TilePlan", "TilingError", "aligned_cin",
    "bundled_networks", "check_plan", "load_network", "make_plan", "memory_footprint",
    "network_schema", "network_tensors", "parse_network", "pipeline_cycles",
    "reference_network", "TileCache", "run_layer_tiled", "run_network", "solve_tiling", "tile_bytes",
]
