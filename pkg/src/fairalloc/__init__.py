"""Fairness audits and counterfactual allocation-policy synthesis."""
