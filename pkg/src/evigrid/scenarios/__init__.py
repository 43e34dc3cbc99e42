"""Bundled scenario files, loadable by name via sim.bundled_scenario."""
