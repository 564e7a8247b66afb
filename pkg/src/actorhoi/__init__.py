"""Actor-centric human-object interaction detection on synthetic desk-scale scenes.

Each detected person is taken in turn as the actor: an actor mask is stacked
onto the image, a small convolutional network predicts per-cell verb scores
for the actor and for every object, and the two are composed at box centers
into ranked (human, verb, object) triplets.
"""

__version__ = "0.1.0"
