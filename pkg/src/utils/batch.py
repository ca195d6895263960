from typing import List


def parse_int_list(params: str, minimum: int = 1) -> List[int]:
    """
    解析逗号分隔的整数列表，例如网格边长 "16,32,64"；兼容中文逗号与空格

    Args:
        params: 原始参数字符串
        minimum: 每个值的下限

    Returns:
        List[int]: 按输入顺序的整数列表

    Raises:
        ValueError: 为空、包含非整数或小于下限的值
    """
    if not params or not params.strip():
        raise ValueError("参数错误！未提供任何数值")

    items = [item.strip() for item in params.replace("，", ",").replace(" ", ",").split(",") if item.strip()]
    values = []
    for item in items:
        if not item.lstrip("-").isdigit():
            raise ValueError(f"参数错误！{item!r} 不是整数")
        value = int(item)
        if value < minimum:
            raise ValueError(f"参数错误！{value} 小于下限 {minimum}")
        values.append(value)
    return values


def format_summary(title: str, values: dict) -> str:
    """把结果字典格式化为多行摘要，浮点数用科学计数法"""
    lines = [f"== {title} =="]
    for key, value in values.items():
        if isinstance(value, float):
            lines.append(f"- {key}: {value:.4e}")
        elif isinstance(value, (list, dict)):
            continue
        else:
            lines.append(f"- {key}: {value}")
    return "\n".join(lines)
