"""
Replaying past reviews
======================

A synthetic corpus of Go files with planted violations is replayed through
the pipeline twice, once greedy and once with a beam, and the comment
stream is summarized.
"""
import random

from bpreview.backend import BEAM, GREEDY, DecodeConfig
from bpreview.pipeline import AnalysisConfig, ThresholdTable
from bpreview.replay import FeedbackEvent, replay_reviews, url_distribution, useful_ratio
from bpreview.synthetic import review_corpus

corpus = review_corpus(n_files=200, seed=1)
stream = [(sf.snapshot, diff) for sf, diff in corpus]
table = ThresholdTable(0.98, {"https://go.dev/wiki/CodeReviewComments#comment-sentences": 0.8})

for strategy in (GREEDY, BEAM):
    report = replay_reviews(stream, AnalysisConfig(decode=DecodeConfig(strategy, 8), thresholds=table))
    print(f"{strategy:6s} files {report.file_posting_frequency:.3f}  "
          f"reviews {report.review_posting_frequency:.3f}  comments {report.comments_total}")

# which URLs dominate the beam run
for row in url_distribution(report.url_histogram):
    print(f"{row.rank}. {row.url} {row.count} cumulative {row.cumulative_share:.2f}")

# simulated reactions; one thumbs-down makes a comment negative
rng = random.Random(2)
events = [FeedbackEvent(f"c{rng.randrange(80)}", rng.choice(["thumbs_up", "please_fix", "thumbs_down"]))
          for _ in range(200)]
print("useful ratio", round(useful_ratio(events), 3))
