# Control structures shared by the scheduler: queues and the two predictors

import logging

# Create a logging service
logger = logging.getLogger(__name__)
