from .dqn import (DqnAgent, QNetwork, ReplayBuffer, dqn_act, dqn_act_index, dqn_loss,
                  dqn_train_step, epsilon_at, order_actions, td_target)
from .lnn import LiquidCell, lnn_forecast, lnn_states, lnn_step, lnn_train
from .lstm import LstmCell, lstm_cell_update, lstm_forecast, lstm_states, lstm_train

__all__ = [
    "DqnAgent", "QNetwork", "ReplayBuffer", "dqn_act", "dqn_act_index", "dqn_loss",
    "dqn_train_step", "epsilon_at", "order_actions", "td_target",
    "LiquidCell", "lnn_forecast", "lnn_states", "lnn_step", "lnn_train",
    "LstmCell", "lstm_cell_update", "lstm_forecast", "lstm_states", "lstm_train",
]
