from importlib.metadata import PackageNotFoundError
from importlib.metadata import version as _dist_version

from .config import Config
from .detector import DetectorGeometry, Hit, default_geometry
from .edgegnn import EdgeClassifierParams, classify_edges, train
from .graphbuild import CutConfig, EventGraph, build_batched_graph, build_event_graph
from .simgen import Event, HelixParams, SimConfig, generate_dataset, generate_event
from .tradfind import run_traditional

try:
    version = _dist_version("py-fdctrack")
except PackageNotFoundError:
    version = "0.0.0"

_ = Config
_ = DetectorGeometry
_ = Hit
_ = default_geometry
_ = EdgeClassifierParams
_ = classify_edges
_ = train
_ = CutConfig
_ = EventGraph
_ = build_batched_graph
_ = build_event_graph
_ = Event
_ = HelixParams
_ = SimConfig
_ = generate_dataset
_ = generate_event
_ = run_traditional
