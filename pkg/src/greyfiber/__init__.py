"""Simulation and service implementation of a marketplace for leasing dark fiber."""

from greyfiber.exchange import Bid, Exchange, Mechanism, run_gsp_auction, run_vcg_auction
from greyfiber.ggc import GGC, LeaseOutcome, StageCosts, classify_request
from greyfiber.glsc import GLSC, MonitorPolicy
from greyfiber.harness import compare_backups, load_scenario, overhead_breakdown, run_scenario
from greyfiber.request import LeaseWindow, ResourceRequest
from greyfiber.substrate import Substrate, provision_latency
from greyfiber.topology import TopologyGraph, load_topology

__all__ = [
    "Bid", "Exchange", "Mechanism", "run_gsp_auction", "run_vcg_auction",
    "GGC", "LeaseOutcome", "StageCosts", "classify_request",
    "GLSC", "MonitorPolicy",
    "compare_backups", "load_scenario", "overhead_breakdown", "run_scenario",
    "LeaseWindow", "ResourceRequest", "Substrate", "provision_latency",
    "TopologyGraph", "load_topology",
]
