from util.text import banner
