"""Blind two-class signal classification by classification-gain minimization."""
