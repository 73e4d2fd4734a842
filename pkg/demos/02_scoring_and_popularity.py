"""
From elicited ratings to ranked recommendations
================================================

A user rates a handful of paintings on a 1..5 scale.  Ratings become
weights, weights become a personal score for every painting in the
collection, and the crowd's popularity list can be blended in with the
user's popularity tolerance.
"""

import numpy as np

from mosaic.dataset import PopularityTable
from mosaic.scoring import UserProfile, aggregate_with_popularity, normalize_ratings, user_scores
from mosaic.selector import select_top_r

from _toy import toy_collection, toy_matrix

collection = toy_collection()
matrix = toy_matrix(collection)

ratings = {"p000": 5, "p001": 2, "p011": 4}
print("elicited ratings:", ratings)
print("weights:", normalize_ratings(ratings))

profile = UserProfile(ratings=ratings)
personal = user_scores(matrix, profile)
top = select_top_r(personal, 9)
print("\npersonal top-9 (score-ranked):")
for pid, score in zip(top.items, top.item_scores):
    print(f"  {pid}  {score:+.4f}")

# blend in the crowd: the last three paintings are the "must-see" list
popularity = collection.popularity
print("\npopular paintings:", sorted(k for k, v in popularity.scores.items() if v > 0))
for beta in (0.0, 0.5, 1.0):
    blended = aggregate_with_popularity(personal, popularity, beta)
    boosted = select_top_r(blended, 9)
    overlap = len(set(boosted.items) & set(top.items))
    print(f"beta={beta:3.1f}: top-9 keeps {overlap}/9 of the personal list -> {boosted.items[:4]}...")
