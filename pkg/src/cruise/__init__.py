"""Mine issue trackers into reviewed Gherkin acceptance criteria.

The pipeline harvests closed issues, reduces them to requirement-bearing
text, matches them against user stories with an ensemble of chat models,
generates one Gherkin acceptance criterion per matched pair, screens the
results for relevance, and serves the survivors to human reviewers.
"""

__version__ = "0.1.0"
