"""Scenario files, checklists, reports and the command line."""
