from .opTask import OpTask
from .opRegistry import OP_REGISTRY, backward, get_op
from .convSpec import ConvSpec
from .autograd import Variable, apply, backprop
from .gradcheck import GradCheckReport, grad_check
from .container import decode_tensor, encode_tensor, load_tensor, save_tensor
